#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bfan/canny.hpp"
#include "bfan/config.hpp"
#include "bfan/pnm.hpp"
#include "bfan/rng.hpp"

namespace bfan {

struct SaliencySample {
  std::string id;
  RgbImage image;
  GrayImage mask;      // {0,1}
  GrayImage boundary;  // {0,1}, canny_boundary(mask)
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
};

// ---------------------------------------------------------------------------
// Preprocessing

inline RgbImage resize_nearest(const RgbImage& img, int out_h, int out_w) {
  RgbImage out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * img.height / out_h);
    for (int c = 0; c < out_w; ++c) {
      const int sc = static_cast<int>(static_cast<long long>(c) * img.width / out_w);
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

inline GrayImage resize_nearest(const GrayImage& img, int out_h, int out_w) {
  GrayImage out(out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    const int sr = static_cast<int>(static_cast<long long>(r) * img.height / out_h);
    for (int c = 0; c < out_w; ++c)
      out.at(r, c) =
          img.at(sr, static_cast<int>(static_cast<long long>(c) * img.width / out_w));
  }
  return out;
}

// Resize to the configured input size and subtract per-channel means.
// Channels are ordered B,G,R in the tensor, matching the mean triple.
inline Tensor preprocess(const RgbImage& img, const RunConfig& cfg) {
  const RgbImage r = (img.height == cfg.input_h && img.width == cfg.input_w)
                         ? img
                         : resize_nearest(img, cfg.input_h, cfg.input_w);
  const double means[3] = {cfg.mean_b, cfg.mean_g, cfg.mean_r};
  const int file_ch[3] = {2, 1, 0};  // B,G,R picked out of interleaved r,g,b
  Tensor out = Tensor::zeros({3, cfg.input_h, cfg.input_w});
  double* p = out.data();
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < cfg.input_h; ++i)
      for (int j = 0; j < cfg.input_w; ++j)
        *p++ = static_cast<double>(r.at(i, j, file_ch[ch])) - means[ch];
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset: noisy background plus 1-3 filled rectangles/ellipses of
// contrasting color; the mask is their union, the boundary its Canny edges.

namespace detail_data {

inline std::uint8_t clamp255(int v) {
  return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

}  // namespace detail_data

inline SaliencySample gen_sample(const std::string& id, int size, Rng& rng) {
  const int margin = 4;
  for (;;) {  // rejection-sample until the mask covers 5..60% of pixels
    RgbImage img(size, size);
    GrayImage mask(size, size);

    int bg[3];
    for (int& v : bg) v = rng.uniform_int(20, 235);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        for (int ch = 0; ch < 3; ++ch)
          img.at(r, c, ch) = detail_data::clamp255(bg[ch] + rng.uniform_int(-8, 8));

    const int nshapes = rng.uniform_int(1, 3);
    for (int s = 0; s < nshapes; ++s) {
      const bool ellipse = rng.next_below(2) == 0;
      const int a = rng.uniform_int(size / 10, size * 3 / 10);  // half extents
      const int b = rng.uniform_int(size / 10, size * 3 / 10);
      const int cx = rng.uniform_int(margin + a, size - 1 - margin - a);
      const int cy = rng.uniform_int(margin + b, size - 1 - margin - b);
      int color[3];
      for (;;) {  // contrast against the background on at least one channel
        bool distinct = false;
        for (int ch = 0; ch < 3; ++ch) {
          color[ch] = rng.uniform_int(0, 255);
          distinct = distinct || std::abs(color[ch] - bg[ch]) >= 60;
        }
        if (distinct) break;
      }
      for (int r = cy - b; r <= cy + b; ++r)
        for (int c = cx - a; c <= cx + a; ++c) {
          if (ellipse) {
            const double dy = static_cast<double>(r - cy) / b;
            const double dx = static_cast<double>(c - cx) / a;
            if (dx * dx + dy * dy > 1.0) continue;
          }
          mask.at(r, c) = 1;
          for (int ch = 0; ch < 3; ++ch)
            img.at(r, c, ch) = detail_data::clamp255(color[ch] + rng.uniform_int(-8, 8));
        }
    }

    const long long covered = count_positive(mask);
    const long long total = static_cast<long long>(size) * size;
    if (covered * 100 < total * 5 || covered * 100 > total * 60) continue;

    GrayImage boundary = canny_boundary(mask);
    if (count_positive(boundary) * 4 > total) continue;  // boundary mask density invariant
    return {id, std::move(img), std::move(mask), std::move(boundary)};
  }
}

inline std::vector<SaliencySample> gen_synthetic(int n, int size, std::uint64_t seed) {
  if (n < 1) throw ContractViolation("gen_synthetic: n must be >= 1");
  if (size < 32 || size % 32 != 0)
    throw ContractViolation("gen_synthetic: size must be a positive multiple of 32");
  Rng rng(seed);
  std::vector<SaliencySample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "sample_%04d", i);
    out.push_back(gen_sample(id, size, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests: one "id<TAB>image_path<TAB>mask_path" per line, '#' comments.
// Relative paths resolve against the manifest's directory.

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path);
  if (!f) throw IoError("manifest: cannot create '" + path.string() + "'");
  f << "# id\timage\tmask\n";
  for (const auto& e : entries)
    f << e.id << "\t" << e.image_path.generic_string() << "\t" << e.mask_path.generic_string()
      << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("manifest: cannot open '" + path.string() + "'");
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw IoError("manifest: line " + std::to_string(lineno) +
                    " is not id<TAB>image<TAB>mask in '" + path.string() + "'");
    ManifestEntry e;
    e.id = line.substr(0, t1);
    std::filesystem::path img(line.substr(t1 + 1, t2 - t1 - 1));
    std::filesystem::path msk(line.substr(t2 + 1));
    e.image_path = img.is_absolute() ? img : base / img;
    e.mask_path = msk.is_absolute() ? msk : base / msk;
    if (!ids.insert(e.id).second)
      throw IoError("manifest: duplicate id '" + e.id + "' at line " + std::to_string(lineno));
    entries.push_back(std::move(e));
  }
  return entries;
}

// Writes images/, masks/, boundaries/ and manifest.txt under out_dir.
inline std::vector<ManifestEntry> write_dataset(const std::filesystem::path& out_dir,
                                                const std::vector<SaliencySample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "boundaries");
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    const fs::path img_rel = fs::path("images") / (s.id + ".ppm");
    const fs::path msk_rel = fs::path("masks") / (s.id + ".pgm");
    pnm::save_rgb(out_dir / img_rel, s.image);
    pnm::save_gray(out_dir / msk_rel, pnm::mask_to_gray(s.mask));
    pnm::save_gray(out_dir / "boundaries" / (s.id + ".pgm"), pnm::mask_to_gray(s.boundary));
    entries.push_back({s.id, img_rel, msk_rel});
  }
  write_manifest(out_dir / "manifest.txt", entries);
  return entries;
}

// Loads and re-derives each sample at its stored resolution; masks are
// binarized at 128, boundaries recomputed from the mask.
inline SaliencySample load_sample(const ManifestEntry& e) {
  SaliencySample s;
  s.id = e.id;
  s.image = pnm::load_rgb(e.image_path);
  s.mask = pnm::gray_to_mask(pnm::load_gray(e.mask_path));
  if (s.mask.height != s.image.height || s.mask.width != s.image.width)
    throw IoError("manifest: image and mask dims differ for id '" + e.id + "'");
  s.boundary = canny_boundary(s.mask);
  return s;
}

}  // namespace bfan
