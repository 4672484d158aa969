// SPDX-License-Identifier: Apache-2.0

#include "alkt/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace alkt {

namespace {

constexpr double kLogFloor = 1e-12;

void check_pairing(std::span<const Tensor> s, std::span<const Tensor> t) {
  if (s.size() != t.size()) {
    throw ShapeError("transfer_loss: block count mismatch " +
                     std::to_string(s.size()) + " vs " + std::to_string(t.size()));
  }
  for (std::size_t l = 0; l < s.size(); ++l) {
    if (s[l].shape() != t[l].shape()) {
      throw ShapeError("transfer_loss: block " + std::to_string(l) +
                       " shape mismatch " + shape_str(s[l].shape()) + " vs " +
                       shape_str(t[l].shape()));
    }
  }
}

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(
      std::distance(row.begin(), std::max_element(row.begin(), row.end())));
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t k = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.values().subspan(i * k, k);
    if (argmax_row(row) == static_cast<std::size_t>(labels[i])) ++hits;
  }
  return hits;
}

[[noreturn]] void non_finite(const char* what, std::size_t epoch,
                             std::size_t batch) {
  std::ostringstream os;
  os << "train_cycle: non-finite " << what << " at epoch " << epoch
     << " batch " << batch;
  throw std::runtime_error(os.str());
}

// One shuffled order per epoch, shared by teacher and student.
std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void check_inputs(const Tensor& features, std::span<const int> labels,
                  const DistillConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw std::invalid_argument("train_cycle: empty labeled set");
  if (features.rank() < 2 || features.dim(0) != labels.size()) {
    throw ShapeError("train_cycle: features " + shape_str(features.shape()) +
                     " do not match " + std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

std::string to_string(TransferMetric metric) {
  switch (metric) {
    case TransferMetric::attention: return "attention";
    case TransferMetric::mse_feature: return "mse-feature";
    case TransferMetric::l1_feature: return "l1-feature";
    case TransferMetric::kl_posterior: return "kl-posterior";
  }
  return "attention";
}

TransferMetric parse_transfer_metric(std::string_view name) {
  if (name == "attention") return TransferMetric::attention;
  if (name == "mse-feature") return TransferMetric::mse_feature;
  if (name == "l1-feature") return TransferMetric::l1_feature;
  if (name == "kl-posterior") return TransferMetric::kl_posterior;
  throw std::invalid_argument("unknown transfer metric '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("distill: lambda must be >= 0");
  if (epochs == 0) throw std::invalid_argument("distill: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("distill: batch size must be positive");
  sgd.validate();
}

std::vector<double> sample_attention_map(const Tensor& activation) {
  if (activation.rank() == 0) throw ShapeError("attention_map: scalar activation");
  if (activation.rank() == 1) {
    std::vector<double> out(activation.values().begin(), activation.values().end());
    for (auto& v : out) v *= v;
    return out;
  }
  const std::size_t c = activation.dim(0);
  const std::size_t spatial = activation.numel() / c;
  std::vector<double> out(spatial, 0.0);
  const auto v = activation.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < spatial; ++j) {
      const double a = v[ch * spatial + j];
      out[j] += a * a;
    }
  return out;
}

double attention_distance(std::span<const double> student_map,
                          std::span<const double> teacher_map) {
  if (student_map.size() != teacher_map.size()) {
    throw ShapeError("attention_distance: length mismatch " +
                     std::to_string(student_map.size()) + " vs " +
                     std::to_string(teacher_map.size()));
  }
  auto norm = [](std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  };
  const double ns = norm(student_map), nt = norm(teacher_map);
  double acc = 0.0;
  for (std::size_t j = 0; j < student_map.size(); ++j) {
    const double a = ns < kDeadMapNorm ? 0.0 : student_map[j] / ns;
    const double b = nt < kDeadMapNorm ? 0.0 : teacher_map[j] / nt;
    acc += (a - b) * (a - b);
  }
  return std::sqrt(acc);
}

Tensor attention_transfer_loss(std::span<const Tensor> student_acts,
                               std::span<const Tensor> teacher_acts) {
  check_pairing(student_acts, teacher_acts);
  if (student_acts.empty()) return Tensor::scalar(0.0);
  Tensor total;
  for (std::size_t l = 0; l < student_acts.size(); ++l) {
    const Tensor s = normalize_rows(attention_map(student_acts[l]), kDeadMapNorm);
    const Tensor t =
        normalize_rows(attention_map(teacher_acts[l].detach()), kDeadMapNorm);
    const Tensor per_sample = row_l2_norm(sub(s, t));
    total = l == 0 ? per_sample : add(total, per_sample);
  }
  return mean(total);
}

std::vector<double> attention_transfer_per_sample(
    std::span<const Tensor> student_acts, std::span<const Tensor> teacher_acts) {
  check_pairing(student_acts, teacher_acts);
  NoGradGuard no_grad;
  if (student_acts.empty()) return {};
  const std::size_t n = student_acts[0].dim(0);
  std::vector<double> out(n, 0.0);
  for (std::size_t l = 0; l < student_acts.size(); ++l) {
    const Tensor s = normalize_rows(attention_map(student_acts[l]), kDeadMapNorm);
    const Tensor t = normalize_rows(attention_map(teacher_acts[l]), kDeadMapNorm);
    const Tensor d = row_l2_norm(sub(s, t));
    for (std::size_t i = 0; i < n; ++i) out[i] += d.values()[i];
  }
  return out;
}

Tensor transfer_loss(const ForwardResult& student, const ForwardResult& teacher,
                     TransferMetric metric) {
  const auto& sa = student.block_activations;
  const auto& ta = teacher.block_activations;
  switch (metric) {
    case TransferMetric::attention:
      return attention_transfer_loss(sa, ta);
    case TransferMetric::mse_feature:
    case TransferMetric::l1_feature: {
      check_pairing(sa, ta);
      Tensor total = Tensor::scalar(0.0);
      for (std::size_t l = 0; l < sa.size(); ++l) {
        const Tensor t = ta[l].detach();
        total = add(total, metric == TransferMetric::mse_feature ? mse(sa[l], t)
                                                                 : l1(sa[l], t));
      }
      return total;
    }
    case TransferMetric::kl_posterior: {
      if (student.logits.shape() != teacher.logits.shape()) {
        throw ShapeError("transfer_loss: logits shape mismatch " +
                         shape_str(student.logits.shape()) + " vs " +
                         shape_str(teacher.logits.shape()));
      }
      Tensor p;
      {
        NoGradGuard no_grad;
        p = softmax(teacher.logits.detach());
      }
      std::vector<double> log_p(p.values().begin(), p.values().end());
      for (auto& v : log_p) v = std::log(std::max(v, kLogFloor));
      const Tensor log_q = log_softmax(student.logits);
      const Tensor kl = sum(mul(p, sub(Tensor::from(p.shape(), std::move(log_p)), log_q)));
      return scale(kl, 1.0 / static_cast<double>(p.dim(0)));
    }
  }
  throw std::invalid_argument("transfer_loss: unknown metric");
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json j;
  auto& ep = j["epochs"] = nlohmann::json::array();
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& s = epochs[e];
    ep.push_back({{"epoch", e},
                  {"teacher_loss", s.teacher_loss},
                  {"student_task_loss", s.student_task_loss},
                  {"transfer_loss", s.transfer_loss},
                  {"teacher_accuracy", s.teacher_accuracy},
                  {"student_accuracy", s.student_accuracy}});
  }
  j["teacher_train_accuracy"] = teacher_train_accuracy;
  j["student_train_accuracy"] = student_train_accuracy;
  return j;
}

double accuracy(const BlockModel& model, const Tensor& features,
                std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: empty set");
  NoGradGuard no_grad;
  const auto out = model.forward(features);
  return static_cast<double>(count_correct(out.logits, labels)) /
         static_cast<double>(labels.size());
}

namespace {

// Shared loop; `student` may be null for supervised-only training.
TrainReport train_impl(BlockModel& teacher, BlockModel* student,
                       const Tensor& features, std::span<const int> labels,
                       const DistillConfig& cfg, std::uint64_t seed) {
  check_inputs(features, labels, cfg);
  const std::size_t n = labels.size();
  std::mt19937_64 rng(seed);
  Sgd teacher_opt(cfg.sgd, cfg.epochs);
  Sgd student_opt(cfg.sgd, cfg.epochs);
  TrainReport report;
  report.epochs.reserve(cfg.epochs);
  std::vector<int> batch_labels;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_order(n, rng);
    EpochStats stats;
    std::size_t t_hits = 0, s_hits = 0, batches = 0;
    for (std::size_t begin = 0, b = 0; begin < n; begin += cfg.batch_size, ++b) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Tensor xb = gather_rows(features, rows);
      batch_labels.clear();
      for (auto r : rows) batch_labels.push_back(labels[r]);

      const ForwardResult t_out = teacher.forward(xb);
      const Tensor t_loss = cross_entropy(log_softmax(t_out.logits), batch_labels);
      if (!std::isfinite(t_loss.item())) non_finite("teacher loss", epoch, b);
      t_loss.backward();
      teacher_opt.step(teacher.parameters(), epoch);
      stats.teacher_loss += t_loss.item();
      t_hits += count_correct(t_out.logits, batch_labels);

      if (student != nullptr) {
        const ForwardResult s_out = student->forward(xb);
        const Tensor s_task = cross_entropy(log_softmax(s_out.logits), batch_labels);
        Tensor total = s_task;
        double trans_value = 0.0;
        if (cfg.lambda > 0.0) {
          const Tensor trans = transfer_loss(s_out, t_out, cfg.transfer_metric);
          trans_value = trans.item();
          total = add(s_task, scale(trans, cfg.lambda));
        }
        if (!std::isfinite(total.item())) non_finite("student loss", epoch, b);
        total.backward();
        student_opt.step(student->parameters(), epoch);
        stats.student_task_loss += s_task.item();
        stats.transfer_loss += trans_value;
        s_hits += count_correct(s_out.logits, batch_labels);
      }
      ++batches;
    }
    const double nb = static_cast<double>(batches);
    stats.teacher_loss /= nb;
    stats.student_task_loss /= nb;
    stats.transfer_loss /= nb;
    stats.teacher_accuracy = static_cast<double>(t_hits) / static_cast<double>(n);
    stats.student_accuracy = static_cast<double>(s_hits) / static_cast<double>(n);
    report.epochs.push_back(stats);
  }
  report.teacher_train_accuracy = accuracy(teacher, features, labels);
  if (student != nullptr) {
    report.student_train_accuracy = accuracy(*student, features, labels);
  }
  return report;
}

}  // namespace

TrainReport train_cycle(ModelPair& models, const Tensor& features,
                        std::span<const int> labels, const DistillConfig& cfg,
                        std::uint64_t seed) {
  return train_impl(models.teacher, &models.student, features, labels, cfg, seed);
}

TrainReport train_supervised(BlockModel& model, const Tensor& features,
                             std::span<const int> labels,
                             const DistillConfig& cfg, std::uint64_t seed) {
  return train_impl(model, nullptr, features, labels, cfg, seed);
}

}  // namespace alkt
