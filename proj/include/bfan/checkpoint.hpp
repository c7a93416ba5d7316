#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "bfan/network.hpp"
#include "bfan/optim.hpp"

// Checkpoint file: little-endian binary, magic "BFAN", version, config hash,
// the canonical config text, epoch counter, data-order RNG state, optimizer
// hyperparameters, then length-prefixed (name, shape, f64 payload) records
// for parameters followed by matching velocity records.

namespace bfan {

namespace detail_ckpt {

constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<std::uint8_t>& b, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(b, u);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) {
    if (bytes.size() - pos < n)
      throw IoError("checkpoint: truncated while reading " + std::string(what) + " at offset " +
                    std::to_string(pos));
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t u = u64(what);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

inline void put_record(std::vector<std::uint8_t>& b, const std::string& name,
                       const std::vector<int>& shape, const double* data, long long count) {
  put_u32(b, static_cast<std::uint32_t>(name.size()));
  b.insert(b.end(), name.begin(), name.end());
  put_u32(b, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(b, static_cast<std::uint32_t>(d));
  for (long long i = 0; i < count; ++i) put_f64(b, data[i]);
}

}  // namespace detail_ckpt

inline void save_checkpoint(const std::filesystem::path& path, const BfanNet& net,
                            const SgdOptimizer& opt, std::uint64_t epoch,
                            const std::array<std::uint64_t, 4>& rng_state) {
  std::vector<std::uint8_t> b;
  b.insert(b.end(), {'B', 'F', 'A', 'N'});
  detail_ckpt::put_u32(b, detail_ckpt::kVersion);
  detail_ckpt::put_u64(b, config_hash(net.config()));
  const std::string cfg_text = serialize_config(net.config());
  detail_ckpt::put_u32(b, static_cast<std::uint32_t>(cfg_text.size()));
  b.insert(b.end(), cfg_text.begin(), cfg_text.end());
  detail_ckpt::put_u64(b, epoch);
  for (std::uint64_t s : rng_state) detail_ckpt::put_u64(b, s);
  detail_ckpt::put_f64(b, opt.lr());
  detail_ckpt::put_f64(b, opt.momentum());
  detail_ckpt::put_f64(b, opt.weight_decay());

  const auto& params = opt.params();
  detail_ckpt::put_u32(b, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params)
    detail_ckpt::put_record(b, p.name, p.tensor.shape(), p.tensor.data(), p.tensor.size());
  const auto& vels = opt.velocities();
  detail_ckpt::put_u32(b, static_cast<std::uint32_t>(vels.size()));
  for (size_t i = 0; i < vels.size(); ++i)
    detail_ckpt::put_record(b, params[i].name, params[i].tensor.shape(), vels[i].data(),
                            static_cast<long long>(vels[i].size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot create '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("checkpoint: short write to '" + path.string() + "'");
}

struct LoadedModel {
  RunConfig cfg;
  std::uint64_t epoch = 0;
  std::array<std::uint64_t, 4> rng_state{};
  double lr = 0.0, momentum = 0.0, weight_decay = 0.0;
  std::shared_ptr<BfanNet> net;
  std::vector<std::vector<double>> velocities;  // aligned with net->parameters()
};

inline LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(f),
                                  std::istreambuf_iterator<char>{});
  detail_ckpt::Reader r{bytes};
  if (r.str(4, "magic") != "BFAN")
    throw IoError("checkpoint: bad magic in '" + path.string() + "'");
  const std::uint32_t version = r.u32("version");
  if (version != detail_ckpt::kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));

  LoadedModel out;
  const std::uint64_t stored_hash = r.u64("config hash");
  const std::uint32_t cfg_len = r.u32("config length");
  out.cfg = parse_config(r.str(cfg_len, "config text"));
  if (config_hash(out.cfg) != stored_hash)
    throw IoError("checkpoint: config hash does not match embedded config text");
  out.epoch = r.u64("epoch");
  for (auto& s : out.rng_state) s = r.u64("rng state");
  out.lr = r.f64("lr");
  out.momentum = r.f64("momentum");
  out.weight_decay = r.f64("weight decay");

  out.net = std::make_shared<BfanNet>(out.cfg);
  auto params = out.net->parameters();

  auto read_records = [&](const char* kind, auto&& apply) {
    const std::uint32_t n = r.u32(kind);
    if (n != params.size())
      throw IoError("checkpoint: expected " + std::to_string(params.size()) + " " + kind +
                    ", found " + std::to_string(n));
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t name_len = r.u32("record name length");
      const std::string name = r.str(name_len, "record name");
      if (name != params[i].name)
        throw IoError("checkpoint: record '" + name + "' does not match parameter '" +
                      params[i].name + "'");
      const std::uint32_t ndim = r.u32("record rank");
      std::vector<int> shape(ndim);
      for (auto& d : shape) d = static_cast<int>(r.u32("record dim"));
      if (shape != params[i].tensor.shape())
        throw IoError("checkpoint: shape mismatch for '" + name + "'");
      const long long count = shape_numel(shape);
      std::vector<double> data(static_cast<size_t>(count));
      for (auto& v : data) v = r.f64("record payload");
      apply(i, std::move(data));
    }
  };

  read_records("parameters", [&](std::uint32_t i, std::vector<double> data) {
    std::copy(data.begin(), data.end(), params[i].tensor.data());
  });
  out.velocities.resize(params.size());
  read_records("velocities", [&](std::uint32_t i, std::vector<double> data) {
    out.velocities[i] = std::move(data);
  });
  return out;
}

}  // namespace bfan
