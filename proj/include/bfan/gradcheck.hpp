#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bfan/tensor.hpp"

namespace bfan {

struct GradCheckResult {
  bool pass = true;
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // elements flagged as non-differentiable points

  void merge(const GradCheckResult& o) {
    pass = pass && o.pass;
    max_rel_error = std::max(max_rel_error, o.max_rel_error);
    checked += o.checked;
    skipped += o.skipped;
  }
};

// Central finite differences against the recorded analytic gradient for the
// given elements of `wrt`. f must rebuild its graph on every call. Elements
// where the one-sided differences disagree sit on a kink (relu, maxpool) and
// are excluded from the comparison.
inline GradCheckResult grad_check_indices(const std::function<Tensor()>& f, Tensor wrt,
                                          const std::vector<long long>& indices,
                                          double step = 1e-6, double tol = 1e-4) {
  if (step <= 0.0) throw ContractViolation("grad_check: step must be positive");
  if (!wrt.requires_grad())
    throw ContractViolation("grad_check: target tensor does not require gradients");

  Tensor loss = f();
  if (loss.size() != 1) throw ContractViolation("grad_check: function must be scalar-valued");
  wrt.zero_grad();
  loss.backward();
  std::vector<double> analytic(static_cast<size_t>(wrt.size()), 0.0);
  if (wrt.has_grad()) analytic = wrt.grad();

  const double f0 = loss.item();
  // Differences below this are cancellation noise in f's evaluation; such
  // elements agree with the analytic gradient to the resolution central
  // differences can offer.
  const double atol =
      32.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0)) / step;
  GradCheckResult res;
  double* px = wrt.data();
  for (long long i : indices) {
    const double saved = px[i];
    px[i] = saved + step;
    const double fp = f().item();
    px[i] = saved - step;
    const double fm = f().item();
    px[i] = saved;

    const double fwd = (fp - f0) / step;
    const double bwd = (f0 - fm) / step;
    const double one_sided_gap = std::abs(fwd - bwd);
    const double mag = std::max({std::abs(fwd), std::abs(bwd), 1.0});
    if (one_sided_gap > 0.05 * mag && one_sided_gap > 10.0 * step) {
      ++res.skipped;  // kink between x-step and x+step
      continue;
    }

    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[static_cast<size_t>(i)];
    const double diff = std::abs(a - numeric);
    ++res.checked;
    if (diff <= atol) continue;
    const double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    if (rel > tol) res.pass = false;
  }
  return res;
}

inline GradCheckResult grad_check(const std::function<Tensor()>& f, Tensor wrt,
                                  double step = 1e-6, double tol = 1e-4) {
  std::vector<long long> all(static_cast<size_t>(wrt.size()));
  for (long long i = 0; i < wrt.size(); ++i) all[static_cast<size_t>(i)] = i;
  return grad_check_indices(f, wrt, all, step, tol);
}

// Convenience overload for functions of one explicit tensor argument.
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                  double step = 1e-6, double tol = 1e-4) {
  return grad_check([&]() { return f(x); }, x, step, tol);
}

}  // namespace bfan
