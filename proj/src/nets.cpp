// SPDX-License-Identifier: Apache-2.0

#include "alkt/nets.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace alkt {

namespace {

constexpr const char* kCheckpointMagic = "alkt-checkpoint";
constexpr int kCheckpointVersion = 1;

Tensor dropout(const Tensor& x, double drop_prob, std::mt19937_64& rng) {
  if (drop_prob <= 0.0) return x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> mask(x.numel());
  const double keep_scale = 1.0 / (1.0 - drop_prob);
  for (auto& m : mask) m = unit(rng) < drop_prob ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::mlp ? "mlp" : "cnn";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mlp") return ModelKind::mlp;
  if (name == "cnn") return ModelKind::cnn;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

void ArchConfig::validate() const {
  if (widths.empty()) throw std::invalid_argument("arch: need at least one block");
  for (auto w : widths)
    if (w == 0) throw std::invalid_argument("arch: block widths must be positive");
  if (num_classes < 2) throw std::invalid_argument("arch: need at least two classes");
  if (teacher_depth == 0 || student_depth == 0) {
    throw std::invalid_argument("arch: depth per block must be positive");
  }
  if (kind == ModelKind::mlp) {
    if (input_shape.size() != 1 || input_shape[0] == 0) {
      throw std::invalid_argument("arch: mlp input shape must be (D)");
    }
  } else {
    if (input_shape.size() != 3 || shape_numel(input_shape) == 0) {
      throw std::invalid_argument("arch: cnn input shape must be (C, H, W)");
    }
    if (kernel_size == 0 || kernel_size % 2 == 0) {
      throw std::invalid_argument("arch: cnn kernel size must be odd");
    }
    std::size_t h = input_shape[1], w = input_shape[2];
    for (std::size_t b = 1; b < widths.size(); ++b) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    if (h == 0 || w == 0) throw std::invalid_argument("arch: input too small");
  }
}

BlockModel::BlockModel(ArchConfig arch, std::size_t depth_per_block)
    : arch_(std::move(arch)), depth_(depth_per_block) {
  arch_.validate();
  if (depth_ == 0) throw std::invalid_argument("model: depth per block must be positive");
  std::size_t in = arch_.input_shape[0];  // features (mlp) or channels (cnn)
  const std::size_t k = arch_.kernel_size;
  for (std::size_t b = 0; b < arch_.blocks(); ++b) {
    const std::size_t out = arch_.widths[b];
    for (std::size_t l = 0; l < depth_; ++l) {
      if (arch_.kind == ModelKind::mlp) {
        params_.push_back(Tensor::parameter({in, out}, std::vector<double>(in * out)));
        strides_.push_back(1);
      } else {
        params_.push_back(
            Tensor::parameter({out, in, k, k}, std::vector<double>(out * in * k * k)));
        strides_.push_back(b > 0 && l == 0 ? 2 : 1);
      }
      params_.push_back(Tensor::parameter({out}, std::vector<double>(out)));
      in = out;
    }
  }
  params_.push_back(Tensor::parameter({in, arch_.num_classes},
                                      std::vector<double>(in * arch_.num_classes)));
  params_.push_back(
      Tensor::parameter({arch_.num_classes}, std::vector<double>(arch_.num_classes)));
}

BlockModel::BlockModel(const BlockModel& other)
    : arch_(other.arch_), depth_(other.depth_), strides_(other.strides_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(p.clone());
}

BlockModel& BlockModel::operator=(const BlockModel& other) {
  if (this != &other) {
    BlockModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void BlockModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < params_.size(); i += 2) {
    auto& w = params_[i];
    std::size_t fan_in = 0, fan_out = 0;
    if (w.rank() == 2) {
      fan_in = w.dim(0);
      fan_out = w.dim(1);
    } else {
      const std::size_t rf = w.dim(2) * w.dim(3);
      fan_in = w.dim(1) * rf;
      fan_out = w.dim(0) * rf;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.mutable_values()) v = dist(rng);
    for (auto& v : params_[i + 1].mutable_values()) v = 0.0;
    w.zero_grad();
    params_[i + 1].zero_grad();
  }
}

ForwardResult BlockModel::forward(const Tensor& batch) const {
  return run(batch, 0.0, nullptr);
}

ForwardResult BlockModel::forward_with_dropout(const Tensor& batch,
                                               double drop_prob,
                                               std::mt19937_64& rng) const {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw std::invalid_argument("dropout probability must lie in [0,1)");
  }
  return run(batch, drop_prob, &rng);
}

ForwardResult BlockModel::run(const Tensor& batch, double drop_prob,
                              std::mt19937_64* rng) const {
  Shape expected{0};
  expected.insert(expected.end(), arch_.input_shape.begin(), arch_.input_shape.end());
  bool ok = batch.rank() == expected.size();
  for (std::size_t i = 1; ok && i < expected.size(); ++i) ok = batch.dim(i) == expected[i];
  if (!ok) {
    expected[0] = batch.rank() > 0 ? batch.dim(0) : 0;
    throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                     " does not match model input " + shape_str(expected));
  }
  ForwardResult result;
  Tensor x = batch;
  std::size_t layer = 0;
  const std::size_t pad = arch_.kernel_size / 2;
  for (std::size_t b = 0; b < arch_.blocks(); ++b) {
    for (std::size_t l = 0; l < depth_; ++l, ++layer) {
      const Tensor& w = params_[2 * layer];
      const Tensor& bias = params_[2 * layer + 1];
      x = arch_.kind == ModelKind::mlp ? matmul(x, w)
                                       : conv2d(x, w, strides_[layer], pad);
      x = relu(add_bias(x, bias));
      if (rng != nullptr) x = dropout(x, drop_prob, *rng);
    }
    result.block_activations.push_back(x);
  }
  result.features = arch_.kind == ModelKind::mlp ? x : global_avg_pool(x);
  result.logits = add_bias(matmul(result.features, params_[2 * layer]),
                           params_[2 * layer + 1]);
  return result;
}

std::size_t BlockModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

std::vector<double> BlockModel::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

void BlockModel::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("model: expected " + std::to_string(parameter_count()) +
                                " parameters, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& p : params_) {
    auto v = p.mutable_values();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + v.size()), v.begin());
    off += v.size();
    p.zero_grad();
  }
}

std::vector<Shape> BlockModel::block_output_shapes() const {
  std::vector<Shape> shapes;
  if (arch_.kind == ModelKind::mlp) {
    for (auto w : arch_.widths) shapes.push_back({w});
    return shapes;
  }
  std::size_t h = arch_.input_shape[1], w = arch_.input_shape[2];
  for (std::size_t b = 0; b < arch_.blocks(); ++b) {
    if (b > 0) {
      // stride-2 conv with "same" padding on an odd kernel
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
    shapes.push_back({arch_.widths[b], h, w});
  }
  return shapes;
}

void BlockModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "kind " << to_string(arch_.kind) << '\n';
  out << "widths";
  for (auto w : arch_.widths) out << ' ' << w;
  out << "\nnum_classes " << arch_.num_classes << '\n';
  out << "input_shape";
  for (auto d : arch_.input_shape) out << ' ' << d;
  out << "\ndepth " << depth_ << '\n';
  out << "kernel " << arch_.kernel_size << '\n';
  const auto flat = flat_parameters();
  out << "parameters " << flat.size() << '\n';
  out << std::setprecision(17);
  for (double v : flat) out << v << '\n';
  if (!out) throw std::runtime_error("short write on checkpoint " + path.string());
}

BlockModel BlockModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  auto fail = [&](const std::string& what) -> std::runtime_error {
    return std::runtime_error("checkpoint " + path.string() + ": " + what);
  };
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic) throw fail("bad magic");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));

  auto read_list = [&](const char* key) {
    std::string line;
    std::getline(in >> std::ws, line);
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw fail(std::string("expected '") + key + "'");
    std::vector<std::size_t> vals;
    std::size_t v;
    while (ls >> v) vals.push_back(v);
    return vals;
  };
  std::string key, kind;
  in >> key >> kind;
  if (key != "kind") throw fail("expected 'kind'");
  ArchConfig arch;
  arch.kind = parse_model_kind(kind);
  arch.widths = read_list("widths");
  const auto classes = read_list("num_classes");
  if (classes.size() != 1) throw fail("bad num_classes");
  arch.num_classes = classes[0];
  arch.input_shape = read_list("input_shape");
  const auto depth = read_list("depth");
  const auto kernel = read_list("kernel");
  const auto count = read_list("parameters");
  if (depth.size() != 1 || kernel.size() != 1 || count.size() != 1) throw fail("bad header");
  arch.kernel_size = kernel[0];
  arch.teacher_depth = depth[0];
  arch.student_depth = depth[0];
  BlockModel model(arch, depth[0]);
  std::vector<double> flat(count[0]);
  for (auto& v : flat) {
    if (!(in >> v)) throw fail("truncated parameter block");
  }
  model.set_flat_parameters(flat);
  return model;
}

ModelPair build_pair(const ArchConfig& arch, std::uint64_t seed) {
  ModelPair pair{BlockModel(arch, arch.teacher_depth),
                 BlockModel(arch, arch.student_depth)};
  pair.teacher.initialize(seed);
  pair.student.initialize(seed + 1);
  return pair;
}

std::vector<Tensor> forward_mc_dropout(const BlockModel& model,
                                       const Tensor& batch, std::size_t passes,
                                       double drop_prob, std::uint64_t seed) {
  if (passes == 0) throw std::invalid_argument("mc dropout: need at least one pass");
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  std::vector<Tensor> out;
  out.reserve(passes);
  for (std::size_t k = 0; k < passes; ++k) {
    out.push_back(softmax(model.forward_with_dropout(batch, drop_prob, rng).logits));
  }
  return out;
}

}  // namespace alkt
