// SPDX-License-Identifier: Apache-2.0

#ifndef ALKT_OPTIM_HPP
#define ALKT_OPTIM_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "alkt/tensor.hpp"

namespace alkt {

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// The rate drops once, at epoch floor(decay_epoch_fraction * total).
  double decay_epoch_fraction = 0.8;
  double decay_factor = 0.1;
  /// Rescale the step's gradients so their global L2 norm is at most this
  /// value; 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

/// Step-decayed learning rate for a zero-based epoch.
double learning_rate_at(const SgdConfig& cfg, std::size_t epoch,
                        std::size_t total_epochs);

/// Momentum SGD with coupled weight decay (after optional clipping):
///   v <- momentum * v + grad + weight_decay * w
///   w <- w - lr(epoch) * v
/// Gradients are cleared after every step.
class Sgd {
 public:
  Sgd(SgdConfig cfg, std::size_t total_epochs);

  void step(std::span<Tensor> params, std::size_t epoch);
  void reset() { velocity_.clear(); }
  const SgdConfig& config() const { return cfg_; }

 private:
  SgdConfig cfg_;
  std::size_t total_epochs_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace alkt

#endif  // ALKT_OPTIM_HPP
