// SPDX-License-Identifier: Apache-2.0

#include "alkt/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace alkt {

namespace {

std::size_t round_half_up_count(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

std::uint32_t read_be32(std::istream& in, std::size_t offset,
                        const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("idx " + path.string() + ": truncated header at byte " +
                             std::to_string(offset));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Reads an unsigned-byte IDX file; returns dims and payload.
std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> read_idx(
    const std::filesystem::path& path, std::size_t expected_dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  const std::uint32_t magic = read_be32(in, 0, path);
  if ((magic >> 16) != 0) {
    throw std::runtime_error("idx " + path.string() + ": bad magic at byte 0");
  }
  if (((magic >> 8) & 0xFF) != 0x08) {
    throw std::runtime_error("idx " + path.string() +
                             ": unsupported element type at byte 2 (only 0x08 unsigned byte)");
  }
  const std::size_t ndims = magic & 0xFF;
  if (ndims != expected_dims) {
    throw std::runtime_error("idx " + path.string() + ": expected " +
                             std::to_string(expected_dims) + " dimensions at byte 3, got " +
                             std::to_string(ndims));
  }
  std::vector<std::size_t> dims(ndims);
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    dims[d] = read_be32(in, 4 + 4 * d, path);
    if (dims[d] == 0) {
      throw std::runtime_error("idx " + path.string() + ": zero extent at byte " +
                               std::to_string(4 + 4 * d));
    }
    total *= dims[d];
  }
  const std::size_t header = 4 + 4 * ndims;
  std::vector<std::uint8_t> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != total) {
    throw std::runtime_error("idx " + path.string() + ": truncated payload at byte " +
                             std::to_string(header + got) + " (expected " +
                             std::to_string(header + total) + ")");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("idx " + path.string() + ": trailing bytes after byte " +
                             std::to_string(header + total));
  }
  return {dims, payload};
}

std::vector<std::vector<std::size_t>> members_by_class(const std::vector<int>& labels,
                                                       std::size_t classes) {
  std::vector<std::vector<std::size_t>> by(classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by[static_cast<std::size_t>(labels[i])].push_back(i);
  return by;
}

std::vector<SplitTag> stratified_tags(const std::vector<int>& labels,
                                      std::size_t classes, double test_fraction,
                                      std::mt19937_64& rng) {
  std::vector<SplitTag> tags(labels.size(), SplitTag::train_pool);
  for (auto members : members_by_class(labels, classes)) {
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_train = round_half_up_count(
        (1.0 - test_fraction) * static_cast<double>(members.size()));
    for (std::size_t j = n_train; j < members.size(); ++j) tags[members[j]] = SplitTag::test;
  }
  return tags;
}

}  // namespace

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::minmax: return "minmax";
    case Normalization::standardize: return "standardize";
    case Normalization::byte_scale: return "byte";
  }
  return "none";
}

Normalization parse_normalization(std::string_view name) {
  if (name == "none") return Normalization::none;
  if (name == "minmax") return Normalization::minmax;
  if (name == "standardize") return Normalization::standardize;
  if (name == "byte") return Normalization::byte_scale;
  throw std::invalid_argument("unknown normalization '" + std::string(name) + "'");
}

// ---- Dataset ---------------------------------------------------------------

Dataset::Dataset(std::string name, Tensor features, std::vector<int> labels,
                 std::size_t num_classes, std::vector<SplitTag> splits)
    : name_(std::move(name)),
      features_(features.detach()),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      splits_(std::move(splits)) {
  if (features_.rank() < 2 || features_.dim(0) != labels_.size() ||
      splits_.size() != labels_.size()) {
    throw std::invalid_argument("dataset: features " + shape_str(features_.shape()) +
                                ", " + std::to_string(labels_.size()) + " labels and " +
                                std::to_string(splits_.size()) + " split tags disagree");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
      throw std::invalid_argument("dataset: label " + std::to_string(labels_[i]) +
                                  " of sample " + std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
    }
  }
}

Shape Dataset::sample_shape() const {
  return Shape(features_.shape().begin() + 1, features_.shape().end());
}

std::vector<std::size_t> Dataset::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits_.size(); ++i)
    if (splits_[i] == tag) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes_, 0);
  for (int l : labels_) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

std::uint64_t Dataset::checksum() const {
  std::uint64_t h = kFnvOffset;
  const auto v = features_.values();
  fnv_mix(h, v.data(), v.size() * sizeof(double));
  for (int l : labels_) {
    const std::int32_t x = l;
    fnv_mix(h, &x, sizeof(x));
  }
  for (auto s : splits_) fnv_mix(h, &s, 1);
  return h;
}

std::string Dataset::checksum_hex() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << checksum();
  return os.str();
}

nlohmann::json Dataset::manifest() const {
  return {{"name", name_},
          {"N", size()},
          {"classes", num_classes_},
          {"checksum", checksum_hex()},
          {"sample_shape", sample_shape()},
          {"class_counts", class_counts()}};
}

Dataset Dataset::with_splits(std::vector<SplitTag> splits) const {
  return Dataset(name_, features_, labels_, num_classes_, std::move(splits));
}

int LabelOracle::label(std::size_t index) const {
  if (index >= data_->labels_.size()) {
    throw std::out_of_range("oracle: index " + std::to_string(index) + " out of range");
  }
  return data_->labels_[index];
}

std::vector<int> LabelOracle::labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(label(i));
  return out;
}

// ---- generators ------------------------------------------------------------

std::vector<double> blob_center(std::size_t cls, std::size_t dims) {
  std::vector<double> c(dims, 0.0);
  const std::size_t axis = cls % dims;
  const double sign = (cls / dims) % 2 == 0 ? 1.0 : -1.0;
  const double radius = 1.0 + static_cast<double>(cls / (2 * dims));
  c[axis] = sign * radius;
  return c;
}

Dataset make_blobs(std::size_t num_classes, std::span<const std::size_t> per_class,
                   std::size_t dims, double spread, std::uint64_t seed) {
  if (num_classes < 2 || dims == 0 || per_class.size() != num_classes || !(spread >= 0.0)) {
    throw std::invalid_argument("make_blobs: need >= 2 classes, dims > 0, one count per class");
  }
  for (auto c : per_class)
    if (c == 0) throw std::invalid_argument("make_blobs: class sizes must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = std::accumulate(per_class.begin(), per_class.end(), std::size_t{0});
  std::vector<double> x;
  x.reserve(n * dims);
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto center = blob_center(k, dims);
    for (std::size_t i = 0; i < per_class[k]; ++i) {
      for (std::size_t d = 0; d < dims; ++d) x.push_back(center[d] + spread * noise(rng));
      labels.push_back(static_cast<int>(k));
    }
  }
  auto tags = stratified_tags(labels, num_classes, 0.2, rng);
  return Dataset("blobs", Tensor::from({n, dims}, std::move(x)), std::move(labels),
                 num_classes, std::move(tags));
}

Dataset make_blobs(std::size_t num_classes, std::size_t per_class,
                   std::size_t dims, double spread, std::uint64_t seed) {
  const std::vector<std::size_t> counts(num_classes, per_class);
  return make_blobs(num_classes, counts, dims, spread, seed);
}

Dataset make_imbalanced(const Dataset& base, std::span<const double> class_fractions,
                        std::uint64_t seed) {
  if (class_fractions.size() != base.num_classes()) {
    throw std::invalid_argument("make_imbalanced: need one fraction per class");
  }
  LabelOracle oracle(base);
  std::vector<int> all_labels(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) all_labels[i] = oracle.label(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  auto by_class = members_by_class(all_labels, base.num_classes());
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const double f = class_fractions[k];
    if (!(f > 0.0 && f <= 1.0)) {
      throw std::invalid_argument("make_imbalanced: fractions must lie in (0,1]");
    }
    auto& members = by_class[k];
    const std::size_t n_keep = round_half_up_count(f * static_cast<double>(members.size()));
    if (n_keep == 0) {
      throw std::invalid_argument("make_imbalanced: class " + std::to_string(k) +
                                  " would become empty");
    }
    std::shuffle(members.begin(), members.end(), rng);
    keep.insert(keep.end(), members.begin(),
                members.begin() + static_cast<std::ptrdiff_t>(n_keep));
  }
  std::sort(keep.begin(), keep.end());
  std::vector<int> labels;
  std::vector<SplitTag> tags;
  for (auto i : keep) {
    labels.push_back(all_labels[i]);
    tags.push_back(base.splits()[i]);
  }
  return Dataset(base.name(), gather_rows(base.features(), keep), std::move(labels),
                 base.num_classes(), std::move(tags));
}

Dataset split_stratified(const Dataset& base, double test_fraction,
                         std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("split: test fraction must lie in (0,1)");
  }
  LabelOracle oracle(base);
  std::vector<int> labels(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) labels[i] = oracle.label(i);
  std::mt19937_64 rng(seed);
  return base.with_splits(stratified_tags(labels, base.num_classes(), test_fraction, rng));
}

// ---- file formats ----------------------------------------------------------

Tensor normalize(const Tensor& features, Normalization normalization) {
  std::vector<double> v(features.values().begin(), features.values().end());
  switch (normalization) {
    case Normalization::none:
      break;
    case Normalization::byte_scale:
      for (auto& x : v) x /= 255.0;
      break;
    case Normalization::minmax: {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      const double a = *lo, range = *hi - *lo;
      for (auto& x : v) x = range > 0.0 ? (x - a) / range : 0.0;
      break;
    }
    case Normalization::standardize: {
      const std::size_t n = features.dim(0), f = v.size() / n;
      for (std::size_t j = 0; j < f; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += v[i * f + j];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) var += (v[i * f + j] - mean) * (v[i * f + j] - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
          v[i * f + j] = sd > 0.0 ? (v[i * f + j] - mean) / sd : 0.0;
        }
      }
      break;
    }
  }
  return Tensor::from(features.shape(), std::move(v));
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels, Normalization normalization) {
  auto [img_dims, pixels] = read_idx(images, 3);
  auto [lab_dims, lab_bytes] = read_idx(labels, 1);
  if (lab_dims[0] != img_dims[0]) {
    throw std::runtime_error("idx: " + std::to_string(img_dims[0]) + " images but " +
                             std::to_string(lab_dims[0]) + " labels");
  }
  const std::size_t n = img_dims[0];
  std::vector<int> lab(lab_bytes.begin(), lab_bytes.end());
  const std::size_t classes = static_cast<std::size_t>(*std::max_element(lab.begin(), lab.end())) + 1;
  std::vector<double> x(pixels.begin(), pixels.end());
  Tensor features = Tensor::from({n, 1, img_dims[1], img_dims[2]}, std::move(x));
  return Dataset(images.stem().string(), normalize(features, normalization), std::move(lab),
                 std::max<std::size_t>(classes, 2),
                 std::vector<SplitTag>(n, SplitTag::train_pool));
}

void write_idx_images(const std::filesystem::path& path, std::size_t n,
                      std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (pixels.size() != n * rows * cols) throw std::invalid_argument("idx: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path.string());
  write_be32(out, 0x00000803);
  write_be32(out, static_cast<std::uint32_t>(n));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot write " + path.string());
  write_be32(out, 0x00000801);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes,
                 Normalization normalization) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  std::vector<double> x;
  std::vector<int> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return std::runtime_error("csv " + path.string() + ": line " + std::to_string(line_no) +
                              ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() < 2) throw fail("expected label and at least one value");
    int label = 0;
    const auto lf = fields[0];
    if (auto r = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        r.ec != std::errc() || r.ptr != lf.data() + lf.size()) {
      throw fail("bad label '" + std::string(lf) + "'");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw fail("label " + std::to_string(label) + " outside [0, " +
                 std::to_string(num_classes) + ")");
    }
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width) {
      throw fail("expected " + std::to_string(width) + " values, got " +
                 std::to_string(fields.size() - 1));
    }
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      const auto f = fields[j];
      if (auto r = std::from_chars(f.data(), f.data() + f.size(), v);
          r.ec != std::errc() || r.ptr != f.data() + f.size()) {
        throw fail("bad value '" + std::string(f) + "' in column " + std::to_string(j));
      }
      x.push_back(v);
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw std::runtime_error("csv " + path.string() + ": no rows");
  const std::size_t n = labels.size();
  Tensor features = Tensor::from({n, width}, std::move(x));
  return Dataset(path.stem().string(), normalize(features, normalization), std::move(labels),
                 num_classes, std::vector<SplitTag>(n, SplitTag::train_pool));
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot write " + path.string());
  LabelOracle oracle(data);
  const std::size_t row = data.features().numel() / data.size();
  const auto v = data.features().values();
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << oracle.label(i);
    for (std::size_t j = 0; j < row; ++j) out << ',' << v[i * row + j];
    out << '\n';
  }
}

}  // namespace alkt
