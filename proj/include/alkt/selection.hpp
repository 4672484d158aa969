// SPDX-License-Identifier: Apache-2.0
//
// Pool bookkeeping and the per-cycle selection protocol: draw a random
// candidate subset of about 10*M unlabeled samples, score it, keep the top M.

#ifndef ALKT_SELECTION_HPP
#define ALKT_SELECTION_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alkt/nets.hpp"
#include "alkt/tensor.hpp"
#include "alkt/uncertainty.hpp"

namespace alkt {

/// Candidate subset size per selected sample.
inline constexpr std::size_t kSubsetFactor = 10;

std::size_t round_half_up(double x);

struct BudgetSchedule {
  double initial_fraction = 0.10;
  double final_fraction = 0.40;
  double step = 0.05;

  void validate() const;
  /// Number of budget points, including the initial one.
  std::size_t points() const;
  double fraction_at(std::size_t cycle) const;
  /// Samples added per cycle for a pool of n: round_half_up(step * n).
  std::size_t quota(std::size_t pool_size) const;
};

class PoolState {
 public:
  PoolState(std::size_t size, std::span<const std::size_t> initial_labeled);

  const std::set<std::size_t>& labeled() const { return labeled_; }
  const std::set<std::size_t>& unlabeled() const { return unlabeled_; }
  const std::vector<std::vector<std::size_t>>& history() const { return history_; }
  const std::vector<std::size_t>& initial() const { return initial_; }
  std::size_t size() const { return size_; }

  /// Move `selected` from unlabeled to labeled and append it to the history.
  /// Throws if any index is not currently unlabeled or appears twice.
  void annotate(std::span<const std::size_t> selected);

  void check_invariants() const;

 private:
  std::size_t size_;
  std::set<std::size_t> labeled_;
  std::set<std::size_t> unlabeled_;
  std::vector<std::size_t> initial_;
  std::vector<std::vector<std::size_t>> history_;
};

/// round_half_up(fraction * n) indices drawn uniformly without replacement.
PoolState init_pool(std::size_t n, double initial_fraction, std::uint64_t seed);

/// min(10*m, |unlabeled|) unlabeled indices drawn without replacement,
/// returned in ascending order.
std::vector<std::size_t> draw_subset(const PoolState& pool, std::size_t m,
                                     std::uint64_t seed);

/// The m highest-scoring indices; ties go to the smaller index. Sorted
/// ascending.
std::vector<std::size_t> select_top(std::span<const UncertaintyScore> scores,
                                    std::size_t m);

PoolState annotate(PoolState pool, std::span<const std::size_t> selected);

enum class StrategyKind {
  proposed,
  random,
  entropy,
  margin,
  least_confidence,
  mc_dropout_entropy,
  coreset_kcenter,
};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);
std::vector<StrategyKind> all_strategies();

struct StrategyContext {
  const BlockModel* teacher = nullptr;
  const BlockModel* student = nullptr;
  /// Rows are addressed by the indices below.
  const Tensor* features = nullptr;
  std::span<const std::size_t> candidates;
  std::span<const std::size_t> labeled;
  std::size_t m = 1;
  std::uint64_t seed = 0;
  UncertaintyMetric metric = UncertaintyMetric::kl_posterior;
  std::optional<PairCalibration> calibration;
  std::size_t mc_passes = 10;
  double mc_drop_prob = 0.25;
  std::size_t threads = 1;
};

/// Selected samples with the score that ranked them, ascending by index.
std::vector<UncertaintyScore> run_strategy(StrategyKind kind,
                                           const StrategyContext& ctx);

struct KCenterPick {
  std::size_t index;
  double min_distance;
};

/// Greedy farthest-first: repeatedly pick the candidate whose minimum
/// Euclidean distance to (labeled + already picked) is largest. Rows of
/// `labeled` and `candidates` are feature vectors; ties go to the smaller
/// candidate index. Returned in pick order.
std::vector<KCenterPick> kcenter_greedy(const Tensor& labeled,
                                        const Tensor& candidates,
                                        std::span<const std::size_t> candidate_indices,
                                        std::size_t m);

/// Teacher and student forward passes over `rows`, scored chunk-wise on up
/// to `threads` workers. Output follows `rows`.
std::vector<UncertaintyScore> score_rows(const BlockModel& teacher,
                                         const BlockModel& student,
                                         const Tensor& features,
                                         std::span<const std::size_t> rows,
                                         UncertaintyMetric metric,
                                         const std::optional<PairCalibration>& calibration,
                                         std::size_t threads);

/// CSV with header `cycle,index,score,strategy`.
struct TraceRow {
  std::size_t cycle;
  std::size_t index;
  double score;
  std::string strategy;
};
void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows);

}  // namespace alkt

#endif  // ALKT_SELECTION_HPP
