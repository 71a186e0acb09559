#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tge/tensor.hpp"

namespace tge::test {

/// Relative gradient mismatch with a unit floor so near-zero entries are
/// compared absolutely.
inline double grad_mismatch(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
  return std::abs(analytic - numeric) / scale;
}

struct GradCheck {
  double max_mismatch = 0.0;
  std::string worst;
};

/// Central-difference check of every parameter entry against the gradients
/// produced by one backward pass. `loss(do_backward)` must rebuild the graph
/// from the current parameter values on every call.
inline GradCheck check_gradients(std::span<tge::Parameter* const> params,
                                 const std::function<double(bool)>& loss, double h = 1e-5) {
  for (tge::Parameter* p : params) p->grad.assign(p->size(), 0.0);
  loss(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (tge::Parameter* p : params) analytic.push_back(p->grad);

  GradCheck result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    tge::Parameter* p = params[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss(false);
      p->value[i] = orig - h;
      const double down = loss(false);
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double mismatch = grad_mismatch(analytic[pi][i], numeric);
      if (mismatch > result.max_mismatch) {
        result.max_mismatch = mismatch;
        result.worst = p->name + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic[pi][i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace tge::test
