// SPDX-License-Identifier: Apache-2.0

#include "alkt/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace alkt {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("sgd: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight decay must be >= 0");
  if (!(decay_epoch_fraction > 0.0 && decay_epoch_fraction <= 1.0)) {
    throw std::invalid_argument("sgd: decay epoch fraction must lie in (0,1]");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("sgd: decay factor must lie in (0,1]");
  }
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("sgd: clip norm must be >= 0");
}

double learning_rate_at(const SgdConfig& cfg, std::size_t epoch,
                        std::size_t total_epochs) {
  const auto decay_at = static_cast<std::size_t>(
      std::floor(cfg.decay_epoch_fraction * static_cast<double>(total_epochs)));
  return epoch >= decay_at ? cfg.learning_rate * cfg.decay_factor
                           : cfg.learning_rate;
}

Sgd::Sgd(SgdConfig cfg, std::size_t total_epochs)
    : cfg_(cfg), total_epochs_(total_epochs) {
  cfg_.validate();
}

void Sgd::step(std::span<Tensor> params, std::size_t epoch) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
  }
  const double lr = learning_rate_at(cfg_, epoch, total_epochs_);
  double factor = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& param : params) {
      for (double g : param.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) factor = cfg_.clip_norm / norm;
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    auto& v = velocity_[p];
    if (v.size() != param.numel()) v.assign(param.numel(), 0.0);
    auto w = param.mutable_values();
    const auto g = param.grad();
    const bool has_grad = !g.empty();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has_grad ? factor * g[i] : 0.0;
      v[i] = cfg_.momentum * v[i] + gi + cfg_.weight_decay * w[i];
      w[i] -= lr * v[i];
    }
    param.zero_grad();
  }
}

}  // namespace alkt
