// SPDX-License-Identifier: Apache-2.0

#include "alkt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace alkt {

GradCheckResult check_gradients(const std::function<Tensor()>& loss,
                                std::span<Tensor> params, double h, double rel_floor) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    const auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    analytic.back().resize(p.numel(), 0.0);
  }

  GradCheckResult r;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), rel_floor});
      r.max_absolute_error = std::max(r.max_absolute_error, abs_err);
      r.max_relative_error = std::max(r.max_relative_error, abs_err / denom);
      ++r.checked;
    }
  }
  for (auto& p : params) p.zero_grad();
  return r;
}

}  // namespace alkt
