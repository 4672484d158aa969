// SPDX-License-Identifier: Apache-2.0
//
// Block-structured classifiers. A model is a chain of N blocks, each made of
// `depth` layers of the same width; the output of every block is exposed so
// teacher and student attention maps can be matched block by block.

#ifndef ALKT_NETS_HPP
#define ALKT_NETS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "alkt/tensor.hpp"

namespace alkt {

enum class ModelKind { mlp, cnn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ArchConfig {
  ModelKind kind = ModelKind::mlp;
  /// One entry per block; N = widths.size().
  std::vector<std::size_t> widths{64, 64, 64};
  std::size_t num_classes = 2;
  /// Per-sample input shape: (D) for mlp, (C, H, W) for cnn.
  Shape input_shape{2};
  std::size_t teacher_depth = 2;
  std::size_t student_depth = 1;
  std::size_t kernel_size = 3;

  std::size_t blocks() const { return widths.size(); }
  void validate() const;
};

struct ForwardResult {
  Tensor logits;
  /// One tensor per block, (N, width) for mlp and (N, C, H, W) for cnn.
  std::vector<Tensor> block_activations;
  /// Input of the linear classifier (penultimate representation).
  Tensor features;
};

class BlockModel {
 public:
  BlockModel(ArchConfig arch, std::size_t depth_per_block);

  BlockModel(const BlockModel& other);
  BlockModel& operator=(const BlockModel& other);
  BlockModel(BlockModel&&) noexcept = default;
  BlockModel& operator=(BlockModel&&) noexcept = default;

  /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  void initialize(std::uint64_t seed);

  ForwardResult forward(const Tensor& batch) const;
  /// Forward pass with inverted dropout after every hidden layer.
  ForwardResult forward_with_dropout(const Tensor& batch, double drop_prob,
                                     std::mt19937_64& rng) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  const ArchConfig& arch() const { return arch_; }
  std::size_t depth_per_block() const { return depth_; }
  /// Per-sample shapes of the block activations.
  std::vector<Shape> block_output_shapes() const;

  void save(const std::filesystem::path& path) const;
  static BlockModel load(const std::filesystem::path& path);

 private:
  ForwardResult run(const Tensor& batch, double drop_prob,
                    std::mt19937_64* rng) const;

  ArchConfig arch_;
  std::size_t depth_;
  // Per layer: weight then bias. Hidden layers first, the classifier last.
  std::vector<Tensor> params_;
  std::vector<std::size_t> strides_;
};

struct ModelPair {
  BlockModel teacher;
  BlockModel student;
};

/// Teacher and shallower student sharing block count and widths, both
/// initialized from `seed` (student uses seed + 1).
ModelPair build_pair(const ArchConfig& arch, std::uint64_t seed);

/// K stochastic forward passes with dropout active; returns K (N, classes)
/// posterior tensors.
std::vector<Tensor> forward_mc_dropout(const BlockModel& model,
                                       const Tensor& batch, std::size_t passes,
                                       double drop_prob, std::uint64_t seed);

}  // namespace alkt

#endif  // ALKT_NETS_HPP
