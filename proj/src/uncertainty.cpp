// SPDX-License-Identifier: Apache-2.0

#include "alkt/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "alkt/distill.hpp"

namespace alkt {

namespace {

std::vector<double> concat_features(std::span<const Tensor> acts,
                                    std::size_t sample) {
  std::vector<double> out;
  for (const auto& a : acts) {
    const std::size_t row = a.numel() / a.dim(0);
    const auto v = a.values().subspan(sample * row, row);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace

std::string to_string(UncertaintyMetric metric) {
  switch (metric) {
    case UncertaintyMetric::kl_posterior: return "kl-posterior";
    case UncertaintyMetric::mse_posterior: return "mse-posterior";
    case UncertaintyMetric::mse_feature: return "mse-feature";
    case UncertaintyMetric::l1_feature: return "l1-feature";
    case UncertaintyMetric::attention_distance: return "attention-distance";
  }
  return "kl-posterior";
}

UncertaintyMetric parse_uncertainty_metric(std::string_view name) {
  if (name == "kl-posterior") return UncertaintyMetric::kl_posterior;
  if (name == "mse-posterior") return UncertaintyMetric::mse_posterior;
  if (name == "mse-feature") return UncertaintyMetric::mse_feature;
  if (name == "l1-feature") return UncertaintyMetric::l1_feature;
  if (name == "attention-distance") return UncertaintyMetric::attention_distance;
  throw std::invalid_argument("unknown uncertainty metric '" + std::string(name) + "'");
}

double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double eps) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch " +
                                std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("kl_divergence: eps must be > 0");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i] * std::log(std::max(p[i], eps) / std::max(q[i], eps));
  }
  return acc;
}

double mse_posterior(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("mse_posterior: length mismatch " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

Tensor tempered_softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature must be > 0");
  }
  NoGradGuard no_grad;
  if (temperature == 1.0) return softmax(logits.detach());
  return softmax(scale(logits.detach(), 1.0 / temperature));
}

std::vector<double> disagreement(const ForwardResult& teacher,
                                 const ForwardResult& student,
                                 UncertaintyMetric metric,
                                 const std::optional<PairCalibration>& calibration) {
  if (teacher.logits.shape() != student.logits.shape()) {
    throw ShapeError("score: logits shape mismatch " +
                     shape_str(teacher.logits.shape()) + " vs " +
                     shape_str(student.logits.shape()));
  }
  const std::size_t n = teacher.logits.dim(0), k = teacher.logits.dim(1);
  std::vector<double> out(n);
  switch (metric) {
    case UncertaintyMetric::kl_posterior:
    case UncertaintyMetric::mse_posterior: {
      const double tt = calibration ? calibration->teacher.temperature : 1.0;
      const double ts = calibration ? calibration->student.temperature : 1.0;
      const Tensor pt = tempered_softmax(teacher.logits, tt);
      const Tensor ps = tempered_softmax(student.logits, ts);
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = pt.values().subspan(i * k, k);
        const auto b = ps.values().subspan(i * k, k);
        out[i] = metric == UncertaintyMetric::kl_posterior ? kl_divergence(a, b)
                                                           : mse_posterior(a, b);
      }
      return out;
    }
    case UncertaintyMetric::mse_feature:
    case UncertaintyMetric::l1_feature: {
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = concat_features(teacher.block_activations, i);
        const auto b = concat_features(student.block_activations, i);
        if (a.size() != b.size()) throw ShapeError("score: feature size mismatch");
        double acc = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
          const double d = a[j] - b[j];
          acc += metric == UncertaintyMetric::mse_feature ? d * d : std::abs(d);
        }
        out[i] = acc / static_cast<double>(a.size());
      }
      return out;
    }
    case UncertaintyMetric::attention_distance:
      return attention_transfer_per_sample(student.block_activations,
                                           teacher.block_activations);
  }
  throw std::invalid_argument("score: unknown metric");
}

std::vector<UncertaintyScore> score(const ForwardResult& teacher,
                                    const ForwardResult& student,
                                    std::span<const std::size_t> indices,
                                    UncertaintyMetric metric,
                                    const std::optional<PairCalibration>& calibration) {
  const auto values = disagreement(teacher, student, metric, calibration);
  if (values.size() != indices.size()) {
    throw std::invalid_argument("score: " + std::to_string(indices.size()) +
                                " indices for " + std::to_string(values.size()) +
                                " samples");
  }
  std::vector<UncertaintyScore> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = {indices[i], values[i]};
  return out;
}

std::vector<double> default_temperature_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 100; ++k) grid.push_back(0.05 * k);
  return grid;
}

double mean_nll(const Tensor& logits, std::span<const int> labels,
                double temperature) {
  if (labels.empty()) throw std::invalid_argument("mean_nll: empty set");
  NoGradGuard no_grad;
  const Tensor lp = log_softmax(scale(logits.detach(), 1.0 / temperature));
  const std::size_t k = lp.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    acc -= lp.values()[i * k + static_cast<std::size_t>(labels[i])];
  }
  return acc / static_cast<double>(labels.size());
}

CalibrationModel fit_temperature(const Tensor& logits,
                                 std::span<const int> labels,
                                 std::span<const double> grid) {
  if (labels.empty()) throw std::invalid_argument("fit_temperature: empty validation set");
  if (grid.empty()) throw std::invalid_argument("fit_temperature: empty grid");
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("fit_temperature: logits " + shape_str(logits.shape()) +
                     " do not match " + std::to_string(labels.size()) + " labels");
  }
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  double best_t = sorted.front();
  double best_nll = std::numeric_limits<double>::infinity();
  for (double t : sorted) {
    if (!(t > 0.0)) throw std::invalid_argument("fit_temperature: grid values must be > 0");
    const double nll = mean_nll(logits, labels, t);
    if (nll < best_nll) {
      best_nll = nll;
      best_t = t;
    }
  }
  return {best_t};
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::entropy: return "entropy";
    case BaselineKind::margin: return "margin";
    case BaselineKind::least_confidence: return "least-confidence";
  }
  return "entropy";
}

std::vector<double> baseline_scores(const Tensor& posteriors, BaselineKind kind) {
  if (posteriors.rank() != 2) {
    throw ShapeError("baseline_scores: expected (N, K), got " +
                     shape_str(posteriors.shape()));
  }
  const std::size_t n = posteriors.dim(0), k = posteriors.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = posteriors.values().subspan(i * k, k);
    switch (kind) {
      case BaselineKind::entropy: {
        double h = 0.0;
        for (double v : p)
          if (v > 0.0) h -= v * std::log(v);
        out[i] = h;
        break;
      }
      case BaselineKind::margin: {
        double top1 = -1.0, top2 = -1.0;
        for (double v : p) {
          if (v > top1) {
            top2 = top1;
            top1 = v;
          } else if (v > top2) {
            top2 = v;
          }
        }
        out[i] = -(top1 - (k > 1 ? top2 : 0.0));
        break;
      }
      case BaselineKind::least_confidence:
        out[i] = 1.0 - *std::max_element(p.begin(), p.end());
        break;
    }
  }
  return out;
}

void write_scores_csv(std::ostream& out, std::span<const UncertaintyScore> scores,
                      std::string_view metric) {
  out << "index,score,metric\n";
  out << std::setprecision(17);
  for (const auto& s : scores) out << s.index << ',' << s.value << ',' << metric << '\n';
}

}  // namespace alkt
