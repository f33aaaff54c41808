#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "skipcross/rng.hpp"
#include "skipcross/tensor.hpp"

namespace skipcross {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  // location and values of the worst coordinate, for diagnostics
  size_t worst_leaf = 0;
  int64_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients against central finite differences in
// double precision. `make_loss` must rebuild the rank-0 loss from the current
// values of `leaves` on every call. The relative error for one coordinate is
//   |analytic - numeric| / max(floor, |analytic| + |numeric|).
// When `coords_per_leaf` is positive, at most that many coordinates are
// sampled per leaf (without replacement) using `rng`; otherwise every
// coordinate is checked.
inline GradCheckResult grad_check(
    const std::function<Tensor64()>& make_loss, std::vector<Tensor64> leaves,
    double eps = 1e-5, int64_t coords_per_leaf = -1, Rng* rng = nullptr,
    double floor = 1e-8) {
  for (Tensor64& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.reset_grad_buffer();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Tensor64 loss = make_loss();
    tape.backward(loss);
  }
  analytic.reserve(leaves.size());
  for (Tensor64& leaf : leaves) {
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }

  GradCheckResult result;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor64& leaf = leaves[li];
    const int64_t n = leaf.numel();
    std::vector<int64_t> coords;
    if (coords_per_leaf > 0 && coords_per_leaf < n) {
      if (!rng) throw UsageError("grad_check: sampling requires an rng");
      std::vector<int64_t> all(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
      rng->shuffle(all);
      coords.assign(all.begin(), all.begin() + coords_per_leaf);
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }
    for (int64_t c : coords) {
      const double saved = leaf.at(c);
      leaf.at(c) = saved + eps;
      const double fp = make_loss().item();
      leaf.at(c) = saved - eps;
      const double fm = make_loss().item();
      leaf.at(c) = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[li][static_cast<size_t>(c)];
      const double rel =
          std::abs(a - numeric) / std::max(floor, std::abs(a) + std::abs(numeric));
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_leaf = li;
        result.worst_coord = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace skipcross
