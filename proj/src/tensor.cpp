// SPDX-License-Identifier: Apache-2.0

#include "alkt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace alkt {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
  throw ShapeError(os.str());
}

[[noreturn]] void shape_fail(const char* op, const Shape& a,
                             const std::string& why) {
  std::ostringstream os;
  os << op << ": invalid shape " << shape_str(a) << " (" << why << ")";
  throw ShapeError(os.str());
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    shape_fail(op, x.shape(), "expected rank " + std::to_string(rank));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

bool wants_grad(const std::shared_ptr<detail::Node>& n) {
  return n->requires_grad;
}

// Elementwise binary op with closures for the two partials.
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da,
              DB db) {
  require_same(op, a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  return detail::make_result(
      a.shape(), std::move(out), {a, b}, [da, db](detail::Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const auto& g = self.grad;
        if (wants_grad(pa)) {
          auto& ga = pa->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * da(pa->values[i], pb->values[i]);
        }
        if (wants_grad(pb)) {
          auto& gb = pb->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            gb[i] += g[i] * db(pa->values[i], pb->values[i]);
        }
      });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : node_(new_node({}, {0.0})) {}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    shape_fail("tensor", shape,
               "expected " + std::to_string(shape_numel(shape)) +
                   " values, got " + std::to_string(values.size()));
  }
  for (auto e : shape) {
    if (e == 0) shape_fail("tensor", shape, "zero extent");
  }
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) shape_fail("dim", shape(), "axis out of range");
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->values.size(); }

std::span<const double> Tensor::values() const { return node_->values; }

std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (numel() != 1) shape_fail("item", shape(), "not a scalar");
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() { node_->grad.clear(); }

bool Tensor::is_leaf() const { return !node_->backward_fn; }

std::uint64_t Tensor::node_id() const { return node_->id; }

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->values));
}

Tensor Tensor::clone() const {
  auto t = detach();
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(node_->values.begin(), node_->values.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) throw std::domain_error(what + ": non-finite value");
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_str(shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto* n : order) {
    if (n->backward_fn) n->grad.assign(n->values.size(), 0.0);
  }
  auto& root = node_->ensure_grad();
  root[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn && !(*it)->grad.empty()) (*it)->backward_fn(**it);
  }
}

// ---- graph plumbing --------------------------------------------------------

Tensor detail::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents,
                           std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(values));
  if (grad_mode) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](auto& p) {
      return p.requires_grad();
    });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

bool grad_enabled() { return grad_mode; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &out[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = &bv[p * m];
      for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
    }
  }
  return detail::make_result({n, m}, std::move(out), {a, b},
                             [n, k, m](detail::Node& self) {
    const auto& g = self.grad;
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto& ga = pa->ensure_grad();
      const auto& bv = pb->values;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[p * m + j];
          ga[i * k + p] += acc;
        }
    }
    if (wants_grad(pb)) {
      auto& gb = pb->ensure_grad();
      const auto& av = pa->values;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double s = av[i * k + p];
          if (s == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += s * g[i * m + j];
        }
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_rank("add_bias", b, 1);
  if (x.rank() < 2 || x.dim(1) != b.dim(0)) {
    shape_fail("add_bias", x.shape(), b.shape());
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.numel() / (n * c);
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = &out[(i * c + ch) * inner];
      for (std::size_t s = 0; s < inner; ++s) p[s] += bv[ch];
    }
  return detail::make_result(x.shape(), std::move(out), {x, b},
                             [n, c, inner](detail::Node& self) {
    const auto& g = self.grad;
    if (wants_grad(self.parents[0])) {
      auto& gx = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (wants_grad(self.parents[1])) {
      auto& gb = self.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* p = &g[(i * c + ch) * inner];
          double acc = 0.0;
          for (std::size_t s = 0; s < inner; ++s) acc += p[s];
          gb[ch] += acc;
        }
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](detail::Node& self) {
    auto& px = self.parents[0];
    auto& gx = px->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (px->values[i] > 0.0) gx[i] += self.grad[i];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride,
              std::size_t padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", kernel, 4);
  if (stride != 1 && stride != 2) {
    shape_fail("conv2d", x.shape(), "stride must be 1 or 2");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = kernel.dim(0), ks = kernel.dim(2);
  if (kernel.dim(1) != c || kernel.dim(3) != ks) {
    shape_fail("conv2d", x.shape(), kernel.shape());
  }
  if (h + 2 * padding < ks || w + 2 * padding < ks) {
    shape_fail("conv2d", x.shape(), kernel.shape());
  }
  const std::size_t ho = (h + 2 * padding - ks) / stride + 1;
  const std::size_t wo = (w + 2 * padding - ks) / stride + 1;
  const auto xv = x.values();
  const auto kv = kernel.values();
  std::vector<double> out(n * o * ho * wo, 0.0);
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  // Visits every (output, input, weight) triple that contributes.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t oc = 0; oc < o; ++oc)
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::size_t oi = ((b * o + oc) * ho + oy) * wo + ox;
            for (std::size_t ic = 0; ic < c; ++ic)
              for (std::size_t ky = 0; ky < ks; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < ks; ++kx) {
                  const auto ix =
                      static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const std::size_t xi =
                      ((b * c + ic) * h + static_cast<std::size_t>(iy)) * w +
                      static_cast<std::size_t>(ix);
                  const std::size_t ki = ((oc * c + ic) * ks + ky) * ks + kx;
                  fn(oi, xi, ki);
                }
              }
          }
  };

  for_each_tap([&](std::size_t oi, std::size_t xi, std::size_t ki) {
    out[oi] += xv[xi] * kv[ki];
  });
  return detail::make_result({n, o, ho, wo}, std::move(out), {x, kernel},
                             [for_each_tap](detail::Node& self) {
    auto& px = self.parents[0];
    auto& pk = self.parents[1];
    const auto& g = self.grad;
    const bool gx_on = wants_grad(px), gk_on = wants_grad(pk);
    std::vector<double>* gx = gx_on ? &px->ensure_grad() : nullptr;
    std::vector<double>* gk = gk_on ? &pk->ensure_grad() : nullptr;
    for_each_tap([&](std::size_t oi, std::size_t xi, std::size_t ki) {
      if (gx) (*gx)[xi] += g[oi] * pk->values[ki];
      if (gk) (*gk)[ki] += g[oi] * px->values[xi];
    });
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto xv = x.values();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < hw; ++s) acc += xv[i * hw + s];
    out[i] = acc / static_cast<double>(hw);
  }
  return detail::make_result({n, c}, std::move(out), {x},
                             [n, c, hw](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t s = 0; s < hw; ++s) gx[i * hw + s] += self.grad[i] * inv;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape);
  return detail::make_result(std::move(shape),
                             std::vector<double>(x.values().begin(),
                                                 x.values().end()),
                             {x}, [](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) shape_fail("flatten", x.shape(), "rank 0");
  const std::size_t n = x.dim(0);
  return reshape(x, {n, x.numel() / n});
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= v;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](detail::Node& self) {
    auto& px = self.parents[0];
    auto& gx = px->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += 2.0 * px->values[i] * self.grad[i];
  });
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) shape_fail("sum_axis", x.shape(), "axis out of range");
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  const auto xv = x.values();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += xv[(o * len + l) * inner + i];
  return detail::make_result(std::move(out_shape), std::move(out), {x},
                             [outer, len, inner](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i)
          gx[(o * len + l) * inner + i] += self.grad[o * inner + i];
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return detail::make_result({}, {total}, {x}, [](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l2_norm(const Tensor& x) {
  const auto xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v * v;
  const double norm = std::sqrt(acc);
  return detail::make_result({}, {norm}, {x}, [](detail::Node& self) {
    auto& px = self.parents[0];
    auto& gx = px->ensure_grad();
    const double nrm = self.values[0];
    if (nrm == 0.0) return;  // subgradient 0 at the origin
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[0] * px->values[i] / nrm;
  });
}

Tensor row_l2_norm(const Tensor& x) {
  require_rank("row_l2_norm", x, 2);
  const std::size_t n = x.dim(0), f = x.dim(1);
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) acc += xv[i * f + j] * xv[i * f + j];
    out[i] = std::sqrt(acc);
  }
  return detail::make_result({n}, std::move(out), {x},
                             [n, f](detail::Node& self) {
    auto& px = self.parents[0];
    auto& gx = px->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double nrm = self.values[i];
      if (nrm == 0.0) continue;
      for (std::size_t j = 0; j < f; ++j)
        gx[i * f + j] += self.grad[i] * px->values[i * f + j] / nrm;
    }
  });
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto lv = logits.values();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &lv[i * k];
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (out[i * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= z;
  }
  return detail::make_result({n, k}, std::move(out), {logits},
                             [n, k](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const auto& p = self.values;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += self.grad[i * k + j] * p[i * k + j];
      for (std::size_t j = 0; j < k; ++j)
        gx[i * k + j] += p[i * k + j] * (self.grad[i * k + j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& logits) {
  require_rank("log_softmax", logits, 2);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto lv = logits.values();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &lv[i * k];
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = row[j] - lse;
  }
  return detail::make_result({n, k}, std::move(out), {logits},
                             [n, k](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < k; ++j) gsum += self.grad[i * k + j];
      for (std::size_t j = 0; j < k; ++j)
        gx[i * k + j] += self.grad[i * k + j] - std::exp(self.values[i * k + j]) * gsum;
    }
  });
}

Tensor cross_entropy(const Tensor& log_probs, std::span<const int> labels) {
  require_rank("cross_entropy", log_probs, 2);
  const std::size_t n = log_probs.dim(0), k = log_probs.dim(1);
  if (labels.size() != n) {
    shape_fail("cross_entropy", log_probs.shape(), Shape{labels.size()});
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const auto lp = log_probs.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(lab[i]) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    acc -= lp[i * k + static_cast<std::size_t>(lab[i])];
  }
  return detail::make_result({}, {acc / static_cast<double>(n)}, {log_probs},
                             [n, k, lab = std::move(lab)](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      gx[i * k + static_cast<std::size_t>(lab[i])] -= g;
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same("mse", a, b);
  return mean(square(sub(a, b)));
}

Tensor l1(const Tensor& a, const Tensor& b) {
  require_same("l1", a, b);
  auto d = sub(a, b);
  std::vector<double> out(d.values().begin(), d.values().end());
  for (auto& v : out) v = std::abs(v);
  auto absd = detail::make_result(d.shape(), std::move(out), {d},
                                  [](detail::Node& self) {
    auto& pd = self.parents[0];
    auto& gd = pd->ensure_grad();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      const double v = pd->values[i];
      gd[i] += self.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
    }
  });
  return mean(absd);
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; },
                [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; },
                [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; },
                [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double, double y) { return 1.0 / y; },
                [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& x, double s) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v += s;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= s;
  return detail::make_result(x.shape(), std::move(out), {x},
                             [s](detail::Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * self.grad[i];
  });
}

Tensor attention_map(const Tensor& activation) {
  if (activation.rank() < 2) {
    shape_fail("attention_map", activation.shape(), "need (N, C, ...)");
  }
  if (activation.rank() == 2) return square(activation);
  return flatten(sum_axis(square(activation), 1));
}

Tensor normalize_rows(const Tensor& x, double min_norm) {
  require_rank("normalize_rows", x, 2);
  const std::size_t n = x.dim(0), f = x.dim(1);
  const auto xv = x.values();
  std::vector<double> norms(n);
  std::vector<double> out(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) acc += xv[i * f + j] * xv[i * f + j];
    norms[i] = std::sqrt(acc);
    if (norms[i] < min_norm) {
      for (std::size_t j = 0; j < f; ++j) out[i * f + j] = 0.0;
      continue;
    }
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = xv[i * f + j] / norms[i];
  }
  return detail::make_result(
      {n, f}, std::move(out), {x},
      [n, f, min_norm, norms = std::move(norms)](detail::Node& self) {
        auto& gx = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const double* g = &self.grad[i * f];
          if (norms[i] < min_norm) continue;
          // d(x/|x|) = (g - u (u.g)) / |x| with u = x/|x|
          const double* u = &self.values[i * f];
          double dot = 0.0;
          for (std::size_t j = 0; j < f; ++j) dot += u[j] * g[j];
          for (std::size_t j = 0; j < f; ++j)
            gx[i * f + j] += (g[j] - u[j] * dot) / norms[i];
        }
      });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin > end || end > x.dim(0) || begin == end) {
    shape_fail("slice_rows", x.shape(), "bad row range");
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = end - begin;
  const auto xv = x.values();
  return Tensor::from(std::move(s),
                      std::vector<double>(xv.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                          xv.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() < 1 || rows.empty()) {
    shape_fail("gather_rows", x.shape(), "empty selection");
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = rows.size();
  const auto xv = x.values();
  std::vector<double> out;
  out.reserve(rows.size() * row);
  for (auto r : rows) {
    if (r >= x.dim(0)) shape_fail("gather_rows", x.shape(), "row out of range");
    out.insert(out.end(), xv.begin() + static_cast<std::ptrdiff_t>(r * row),
               xv.begin() + static_cast<std::ptrdiff_t>((r + 1) * row));
  }
  return Tensor::from(std::move(s), std::move(out));
}

}  // namespace alkt
