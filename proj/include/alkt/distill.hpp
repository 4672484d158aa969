// SPDX-License-Identifier: Apache-2.0
//
// Attention transfer between a teacher and a student, and the joint training
// loop run once per active-learning cycle.
//
// The attention map of a block output A with C channels is sum_i A_i^2 over
// channels, one entry per spatial location. The transfer loss sums, over
// matched blocks, the L2 distance between the L2-normalized teacher and
// student maps. The teacher side is always detached.

#ifndef ALKT_DISTILL_HPP
#define ALKT_DISTILL_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "alkt/nets.hpp"
#include "alkt/optim.hpp"
#include "alkt/tensor.hpp"

namespace alkt {

/// Maps whose L2 norm falls below this are treated as the zero vector.
inline constexpr double kDeadMapNorm = 1e-12;

enum class TransferMetric { attention, mse_feature, l1_feature, kl_posterior };

std::string to_string(TransferMetric metric);
TransferMetric parse_transfer_metric(std::string_view name);

struct DistillConfig {
  double lambda = 100.0;
  TransferMetric transfer_metric = TransferMetric::attention;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  SgdConfig sgd;

  void validate() const;
};

/// Attention map of one sample's activation laid out as (C, spatial...).
/// A rank-1 activation is one channel over its units.
std::vector<double> sample_attention_map(const Tensor& activation);

/// || a/|a| - b/|b| ||_2 with the dead-map guard applied to each side.
double attention_distance(std::span<const double> student_map,
                          std::span<const double> teacher_map);

/// Batch-mean transfer loss between per-block activations. Differentiable
/// with respect to the student side only.
Tensor attention_transfer_loss(std::span<const Tensor> student_acts,
                               std::span<const Tensor> teacher_acts);

/// Per-sample attention-transfer value (N) without a graph.
std::vector<double> attention_transfer_per_sample(
    std::span<const Tensor> student_acts, std::span<const Tensor> teacher_acts);

/// Transfer loss for any configured metric. The kl_posterior variant compares
/// logits; the feature variants compare raw block activations.
Tensor transfer_loss(const ForwardResult& student, const ForwardResult& teacher,
                     TransferMetric metric);

struct EpochStats {
  double teacher_loss = 0.0;
  double student_task_loss = 0.0;
  double transfer_loss = 0.0;
  double teacher_accuracy = 0.0;
  double student_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double teacher_train_accuracy = 0.0;
  double student_train_accuracy = 0.0;

  nlohmann::json to_json() const;
};

/// Train both models on the labeled data. The teacher minimizes cross-entropy;
/// the student minimizes cross-entropy + lambda * transfer loss, on the same
/// shuffled batches. Throws on an empty set or a non-finite loss.
TrainReport train_cycle(ModelPair& models, const Tensor& features,
                        std::span<const int> labels, const DistillConfig& cfg,
                        std::uint64_t seed);

/// Plain supervised training of one model with the same batch protocol.
TrainReport train_supervised(BlockModel& model, const Tensor& features,
                             std::span<const int> labels,
                             const DistillConfig& cfg, std::uint64_t seed);

/// Fraction of rows whose argmax logit equals the label (no graph).
double accuracy(const BlockModel& model, const Tensor& features,
                std::span<const int> labels);

}  // namespace alkt

#endif  // ALKT_DISTILL_HPP
