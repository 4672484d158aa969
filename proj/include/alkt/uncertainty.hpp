// SPDX-License-Identifier: Apache-2.0
//
// Teacher/student disagreement scores, classic posterior baselines, and
// temperature-scaling calibration.

#ifndef ALKT_UNCERTAINTY_HPP
#define ALKT_UNCERTAINTY_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alkt/nets.hpp"
#include "alkt/tensor.hpp"

namespace alkt {

/// Floor applied to probabilities inside logarithms.
inline constexpr double kKlEps = 1e-12;

enum class UncertaintyMetric {
  kl_posterior,
  mse_posterior,
  mse_feature,
  l1_feature,
  attention_distance,
};

std::string to_string(UncertaintyMetric metric);
UncertaintyMetric parse_uncertainty_metric(std::string_view name);

struct UncertaintyScore {
  std::size_t index = 0;
  double value = 0.0;
};

struct CalibrationModel {
  double temperature = 1.0;
};

/// Each model keeps its own fitted temperature.
struct PairCalibration {
  CalibrationModel teacher;
  CalibrationModel student;
};

/// KL(p || q) = sum_i p_i ln(p_i / q_i), with both p and q floored at eps
/// inside the logarithm.
double kl_divergence(std::span<const double> p, std::span<const double> q,
                     double eps = kKlEps);

/// Mean squared difference of two equal-length probability vectors or maps.
double mse_posterior(std::span<const double> a, std::span<const double> b);

/// Row-wise softmax of logits / temperature (no graph).
Tensor tempered_softmax(const Tensor& logits, double temperature);

/// One disagreement value per sample, in batch order. Posterior metrics use
/// the teacher first; with calibration both logit sets are divided by their
/// model's temperature before the softmax.
std::vector<double> disagreement(const ForwardResult& teacher,
                                 const ForwardResult& student,
                                 UncertaintyMetric metric,
                                 const std::optional<PairCalibration>& calibration = {});

/// disagreement() with dataset indices attached; indices[i] names row i.
std::vector<UncertaintyScore> score(const ForwardResult& teacher,
                                    const ForwardResult& student,
                                    std::span<const std::size_t> indices,
                                    UncertaintyMetric metric,
                                    const std::optional<PairCalibration>& calibration = {});

/// 0.05, 0.10, ..., 5.00
std::vector<double> default_temperature_grid();

double mean_nll(const Tensor& logits, std::span<const int> labels,
                double temperature);

/// Grid search for the temperature minimizing validation NLL; ties resolve
/// to the smallest temperature.
CalibrationModel fit_temperature(const Tensor& logits,
                                 std::span<const int> labels,
                                 std::span<const double> grid);

enum class BaselineKind { entropy, margin, least_confidence };

std::string to_string(BaselineKind kind);

/// Larger means more uncertain for every kind:
///   entropy          -sum p ln p
///   margin           -(p_top1 - p_top2)
///   least-confidence 1 - max p
std::vector<double> baseline_scores(const Tensor& posteriors, BaselineKind kind);

/// CSV with header `index,score,metric`.
void write_scores_csv(std::ostream& out, std::span<const UncertaintyScore> scores,
                      std::string_view metric);

}  // namespace alkt

#endif  // ALKT_UNCERTAINTY_HPP
