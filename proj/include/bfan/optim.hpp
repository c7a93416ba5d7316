#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bfan/tensor.hpp"

namespace bfan {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// SGD with momentum and weight decay. One velocity buffer per parameter,
// matched by position; parameter order is fixed by network construction.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<NamedParam> params, double lr, double momentum, double weight_decay)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.resize(params_.size());
    for (size_t p = 0; p < params_.size(); ++p)
      velocity_[p].assign(static_cast<size_t>(params_[p].tensor.size()), 0.0);
  }

  // g' = g + wd*w; v = momentum*v + g'; w -= lr*v
  void step() {
    for (size_t p = 0; p < params_.size(); ++p) {
      Tensor& t = params_[p].tensor;
      std::vector<double>& vel = velocity_[p];
      const double* g = t.has_grad() ? t.grad().data() : nullptr;
      double* w = t.data();
      for (long long i = 0; i < t.size(); ++i) {
        const double grad = (g ? g[i] : 0.0) + weight_decay_ * w[i];
        vel[static_cast<size_t>(i)] = momentum_ * vel[static_cast<size_t>(i)] + grad;
        w[i] -= lr_ * vel[static_cast<size_t>(i)];
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<std::vector<double>>& velocities() { return velocity_; }
  const std::vector<std::vector<double>>& velocities() const { return velocity_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_, weight_decay_;
};

// base_lr reduced by 10% after every 10 epochs
inline double lr_schedule(int epoch, double base_lr) {
  if (epoch < 0) throw ContractViolation("lr_schedule: epoch must be >= 0");
  return base_lr * std::pow(0.9, epoch / 10);
}

}  // namespace bfan
