// SPDX-License-Identifier: Apache-2.0
//
// Active-learning cycle driver and the diagnostics built on it.

#ifndef ALKT_EXPERIMENT_HPP
#define ALKT_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "alkt/datasets.hpp"
#include "alkt/distill.hpp"
#include "alkt/nets.hpp"
#include "alkt/selection.hpp"
#include "alkt/uncertainty.hpp"

namespace alkt {

std::string git_describe();
std::string library_version();

/// SplitMix64 finalizer over (base, stream, index); used for every derived
/// seed so streams never collide.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index);

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t init = 1;
  std::uint64_t strategy = 1;

  Seeds offset(std::uint64_t i) const { return {data + i, init + i, strategy + i}; }
};

struct ExperimentConfig {
  /// kind, widths and depths; input shape and class count come from the data.
  ArchConfig arch;
  DistillConfig distill;
  BudgetSchedule schedule;
  UncertaintyMetric metric = UncertaintyMetric::kl_posterior;
  bool calibrate = false;
  /// Share of each cycle's labeled set held out for temperature fitting.
  double calibration_fraction = 0.10;
  /// Continue from the previous cycle's weights instead of re-initializing.
  bool fine_tune = false;
  std::size_t mc_passes = 10;
  double mc_drop_prob = 0.25;
  std::size_t threads = 1;

  nlohmann::json to_json() const;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

EvalResult evaluate(const BlockModel& model, const Tensor& features,
                    std::span<const int> labels, std::size_t num_classes);
EvalResult evaluate(const BlockModel& model, const Dataset& data, SplitTag split);

struct CycleRecord {
  std::size_t cycle = 0;
  double budget_fraction = 0.0;
  std::size_t labeled = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  /// (train - test) in percentage points.
  double gap_pp = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> selected;
  double wall_seconds = 0.0;
};

struct BoundRecord {
  std::size_t cycle = 0;
  std::size_t index = 0;
  double d_teacher_student = 0.0;
  double student_to_label = 0.0;
  double teacher_to_label = 0.0;

  bool holds(double tol = 1e-9) const {
    return teacher_to_label <= d_teacher_student + student_to_label + tol;
  }
};

/// L2 distances between teacher posterior, student posterior and the one-hot
/// label for each listed sample.
std::vector<BoundRecord> bound_diagnostic(const BlockModel& teacher,
                                          const BlockModel& student,
                                          const Tensor& features,
                                          std::span<const std::size_t> indices,
                                          std::span<const int> labels);

/// Pearson correlation; 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// corr(d, d + student_to_label) over the records.
double bound_correlation(std::span<const BoundRecord> bounds);

struct RunResult {
  std::string strategy;
  std::vector<std::size_t> initial_labeled;
  std::vector<CycleRecord> records;
  std::vector<BoundRecord> bounds;
  std::vector<TraceRow> trace;
  std::vector<TrainReport> train_reports;
  nlohmann::json manifest;
};

/// Throws std::invalid_argument unless every budget point fits a pool of n.
void check_schedule_feasible(const BudgetSchedule& schedule, std::size_t pool_size);

/// One full active-learning run. When `out_dir` is given, artifacts are
/// rewritten after every cycle and once more if a cycle throws.
RunResult run_experiment(const Dataset& data, StrategyKind strategy,
                         const ExperimentConfig& cfg, const Seeds& seeds,
                         const std::optional<std::filesystem::path>& out_dir = {},
                         const nlohmann::json& manifest_extra = {});

/// records.csv, bounds.csv, selection_trace.csv, timing.csv, manifest.json
void write_run_artifacts(const std::filesystem::path& dir, const RunResult& run);

void write_records_csv(std::ostream& out, std::span<const CycleRecord> records);
void write_bounds_csv(std::ostream& out, std::span<const BoundRecord> bounds);

struct StudyEntry {
  std::string strategy;
  std::vector<std::size_t> selected;
  /// Accuracy of the initial model on the selected samples; empty when
  /// nothing was selected.
  std::optional<double> selected_accuracy;
  double retrained_test_accuracy = 0.0;
};

struct StudyReport {
  std::size_t initial_labeled = 0;
  double initial_test_accuracy = 0.0;
  std::vector<StudyEntry> entries;

  nlohmann::json to_json() const;
};

/// Train on a random initial split, let every strategy add `extra_quota`
/// samples, then report (a) the initial model's accuracy on each selection
/// and (b) the test accuracy after retraining on initial + selected.
StudyReport selected_data_study(const Dataset& data, const ExperimentConfig& cfg,
                                double initial_fraction, std::size_t extra_quota,
                                std::span<const StrategyKind> strategies,
                                const Seeds& seeds, bool use_subset = true);

/// Train `arch` (teacher depth) from scratch on each strategy's labeled set
/// and report test accuracy per strategy.
std::map<std::string, double> transfer_to_deeper_study(
    const Dataset& data, const std::map<std::string, std::vector<std::size_t>>& labeled_sets,
    const ArchConfig& arch, const DistillConfig& distill, std::uint64_t seed);

/// Initial labeled set plus every traced selection, in dataset indices.
std::vector<std::size_t> final_labeled_set(const RunResult& run);

/// Features shaped for the model kind (flattened for an mlp on image data).
Tensor model_features(const Dataset& data, ModelKind kind);
/// Arch with input shape and class count taken from the data.
ArchConfig bind_arch(ArchConfig arch, const Dataset& data);

}  // namespace alkt

#endif  // ALKT_EXPERIMENT_HPP
