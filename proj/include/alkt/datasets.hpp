// SPDX-License-Identifier: Apache-2.0

#ifndef ALKT_DATASETS_HPP
#define ALKT_DATASETS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "alkt/tensor.hpp"

namespace alkt {

enum class SplitTag : std::uint8_t { train_pool, test };

enum class Normalization { none, minmax, standardize, byte_scale };

std::string to_string(Normalization n);
Normalization parse_normalization(std::string_view name);

/// Immutable labeled dataset. Ground-truth labels are only reachable through
/// LabelOracle, so scoring code that takes a Dataset cannot peek at them.
class Dataset {
 public:
  Dataset(std::string name, Tensor features, std::vector<int> labels,
          std::size_t num_classes, std::vector<SplitTag> splits);

  const std::string& name() const { return name_; }
  std::size_t size() const { return splits_.size(); }
  const Tensor& features() const { return features_; }
  Shape sample_shape() const;
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<SplitTag>& splits() const { return splits_; }
  std::vector<std::size_t> indices(SplitTag tag) const;
  std::vector<std::size_t> class_counts() const;

  /// FNV-1a 64 over feature bytes, labels and split tags.
  std::uint64_t checksum() const;
  std::string checksum_hex() const;
  /// {name, N, classes, checksum, sample_shape, class_counts}
  nlohmann::json manifest() const;

  Dataset with_splits(std::vector<SplitTag> splits) const;

 private:
  std::string name_;
  Tensor features_;
  std::vector<int> labels_;
  std::size_t num_classes_;
  std::vector<SplitTag> splits_;

  friend class LabelOracle;
};

/// Simulated annotator backed by the dataset's ground truth.
class LabelOracle {
 public:
  explicit LabelOracle(const Dataset& data) : data_(&data) {}
  int label(std::size_t index) const;
  std::vector<int> labels(std::span<const std::size_t> indices) const;

 private:
  const Dataset* data_;
};

/// Gaussian clusters with std `spread` around deterministic, pairwise
/// distinct centers (+-e_j axis vertices, pushed outward every 2*dims
/// classes). Stratified 80/20 train-pool/test split.
Dataset make_blobs(std::size_t num_classes, std::span<const std::size_t> per_class,
                   std::size_t dims, double spread, std::uint64_t seed);
Dataset make_blobs(std::size_t num_classes, std::size_t per_class,
                   std::size_t dims, double spread, std::uint64_t seed);

std::vector<double> blob_center(std::size_t cls, std::size_t dims);

/// Keep round-half-up(fraction_c * count_c) random members of every class.
Dataset make_imbalanced(const Dataset& base, std::span<const double> class_fractions,
                        std::uint64_t seed);

/// Re-split a dataset per class, test_fraction of each class going to test.
Dataset split_stratified(const Dataset& base, double test_fraction,
                         std::uint64_t seed);

/// IDX image file (magic 0x00000803, unsigned bytes, N x H x W) plus IDX
/// label file (0x00000801). Samples become (1, H, W). Every sample starts in
/// the train pool.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels,
                 Normalization normalization = Normalization::byte_scale);

void write_idx_images(const std::filesystem::path& path, std::size_t n,
                      std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels);

/// Rows of `label,value,value,...`. Every sample starts in the train pool.
Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes,
                 Normalization normalization = Normalization::minmax);
void write_csv(const std::filesystem::path& path, const Dataset& data);

Tensor normalize(const Tensor& features, Normalization normalization);

}  // namespace alkt

#endif  // ALKT_DATASETS_HPP
