#pragma once

#include <charconv>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bfan/tensor.hpp"

namespace bfan {

enum class Ablation { Baseline, BoundaryMinus, BoundaryPlus, AffmPlus };

inline std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Baseline: return "baseline";
    case Ablation::BoundaryMinus: return "boundary_minus";
    case Ablation::BoundaryPlus: return "boundary_plus";
    case Ablation::AffmPlus: return "affm_plus";
  }
  return "affm_plus";
}

inline Ablation ablation_from_name(const std::string& s) {
  if (s == "baseline") return Ablation::Baseline;
  if (s == "boundary_minus") return Ablation::BoundaryMinus;
  if (s == "boundary_plus") return Ablation::BoundaryPlus;
  if (s == "affm_plus") return Ablation::AffmPlus;
  throw ConfigError("config: unknown ablation '" + s + "'");
}

// One value of RunConfig defines one reproducible network and training run.
// Flat key=value text file; unknown keys are rejected and
// parse -> serialize -> parse is a fixpoint.
struct RunConfig {
  // architecture
  int input_h = 64;
  int input_w = 64;
  int base_channels = 16;
  int boundary_channels = 16;
  int agg_channels = 32;
  Ablation ablation = Ablation::AffmPlus;
  std::set<int> fpm_subset = {1, 2, 3, 4, 5};
  int rcu_per_scale = 1;
  std::uint64_t rng_seed = 1;
  // training
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda_boundary = 1.0;
  bool supervise_stages = true;
  int batch_size = 8;
  int checkpoint_every = 10;
  bool plateau_stop = false;
  // preprocessing means, stored channel order B,G,R
  double mean_b = 104.0;
  double mean_g = 116.7;
  double mean_r = 122.7;

  static constexpr int kLevels = 4;  // saliency encoder taps, strides 2..16
  static constexpr int kScales = 5;  // aggregation / boundary scales

  void validate() const {
    if (input_h <= 0 || input_w <= 0 || input_h % 32 != 0 || input_w % 32 != 0)
      throw ContractViolation("config: input dims must be positive multiples of 32, got " +
                              std::to_string(input_h) + "x" + std::to_string(input_w));
    if (base_channels <= 0 || boundary_channels <= 0 || agg_channels <= 0)
      throw ContractViolation("config: channel counts must be positive");
    if (fpm_subset.empty()) throw ContractViolation("config: fpm_subset must be non-empty");
    for (int t : fpm_subset)
      if (t < 1 || t > kScales)
        throw ContractViolation("config: fpm_subset entries must lie in 1..5");
    if (rcu_per_scale < 1) throw ContractViolation("config: rcu_per_scale must be >= 1");
    if (batch_size < 1) throw ContractViolation("config: batch_size must be >= 1");
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config: value '" + s + "' for key '" + key + "' is not a number");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config: value '" + s + "' for key '" + key + "' is not an integer");
  return v;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os << "input_h=" << c.input_h << "\n";
  os << "input_w=" << c.input_w << "\n";
  os << "base_channels=" << c.base_channels << "\n";
  os << "boundary_channels=" << c.boundary_channels << "\n";
  os << "agg_channels=" << c.agg_channels << "\n";
  os << "ablation=" << ablation_name(c.ablation) << "\n";
  os << "fpm_subset=";
  bool first = true;
  for (int t : c.fpm_subset) {
    os << (first ? "" : ",") << t;
    first = false;
  }
  os << "\n";
  os << "rcu_per_scale=" << c.rcu_per_scale << "\n";
  os << "rng_seed=" << c.rng_seed << "\n";
  os << "lr=" << detail::fmt_double(c.lr) << "\n";
  os << "momentum=" << detail::fmt_double(c.momentum) << "\n";
  os << "weight_decay=" << detail::fmt_double(c.weight_decay) << "\n";
  os << "lambda_boundary=" << detail::fmt_double(c.lambda_boundary) << "\n";
  os << "supervise_stages=" << (c.supervise_stages ? 1 : 0) << "\n";
  os << "batch_size=" << c.batch_size << "\n";
  os << "checkpoint_every=" << c.checkpoint_every << "\n";
  os << "plateau_stop=" << (c.plateau_stop ? 1 : 0) << "\n";
  os << "mean_b=" << detail::fmt_double(c.mean_b) << "\n";
  os << "mean_g=" << detail::fmt_double(c.mean_g) << "\n";
  os << "mean_r=" << detail::fmt_double(c.mean_r) << "\n";
  return os.str();
}

inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" + t +
                        "'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));

    if (key == "input_h") c.input_h = static_cast<int>(detail::parse_int(key, val));
    else if (key == "input_w") c.input_w = static_cast<int>(detail::parse_int(key, val));
    else if (key == "base_channels") c.base_channels = static_cast<int>(detail::parse_int(key, val));
    else if (key == "boundary_channels") c.boundary_channels = static_cast<int>(detail::parse_int(key, val));
    else if (key == "agg_channels") c.agg_channels = static_cast<int>(detail::parse_int(key, val));
    else if (key == "ablation") c.ablation = ablation_from_name(val);
    else if (key == "fpm_subset") {
      c.fpm_subset.clear();
      std::istringstream vs(val);
      std::string tok;
      while (std::getline(vs, tok, ','))
        c.fpm_subset.insert(static_cast<int>(detail::parse_int(key, detail::trim(tok))));
    } else if (key == "rcu_per_scale") c.rcu_per_scale = static_cast<int>(detail::parse_int(key, val));
    else if (key == "rng_seed") c.rng_seed = static_cast<std::uint64_t>(detail::parse_int(key, val));
    else if (key == "lr") c.lr = detail::parse_double(key, val);
    else if (key == "momentum") c.momentum = detail::parse_double(key, val);
    else if (key == "weight_decay") c.weight_decay = detail::parse_double(key, val);
    else if (key == "lambda_boundary") c.lambda_boundary = detail::parse_double(key, val);
    else if (key == "supervise_stages") c.supervise_stages = detail::parse_int(key, val) != 0;
    else if (key == "batch_size") c.batch_size = static_cast<int>(detail::parse_int(key, val));
    else if (key == "checkpoint_every") c.checkpoint_every = static_cast<int>(detail::parse_int(key, val));
    else if (key == "plateau_stop") c.plateau_stop = detail::parse_int(key, val) != 0;
    else if (key == "mean_b") c.mean_b = detail::parse_double(key, val);
    else if (key == "mean_g") c.mean_g = detail::parse_double(key, val);
    else if (key == "mean_r") c.mean_r = detail::parse_double(key, val);
    else throw ConfigError("config: unknown key '" + key + "' on line " + std::to_string(lineno));
  }
  c.validate();
  return c;
}

// FNV-1a over the canonical serialization; identifies a config in checkpoints.
inline std::uint64_t config_hash(const RunConfig& c) {
  const std::string s = serialize_config(c);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace bfan
