// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of reverse-mode gradients.

#ifndef ALKT_GRADCHECK_HPP
#define ALKT_GRADCHECK_HPP

#include <cstddef>
#include <functional>
#include <span>

#include "alkt/tensor.hpp"

namespace alkt {

struct GradCheckResult {
  /// max |a - n| / max(|a|, |n|, rel_floor) over every parameter entry.
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
};

/// `loss` must rebuild the graph from `params` on every call and return a
/// scalar. Parameter values are restored before returning.
GradCheckResult check_gradients(const std::function<Tensor()>& loss,
                                std::span<Tensor> params, double h = 1e-5,
                                double rel_floor = 1e-4);

}  // namespace alkt

#endif  // ALKT_GRADCHECK_HPP
