// SPDX-License-Identifier: Apache-2.0

#include "alkt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace alkt {

namespace {

std::vector<std::size_t> sample_without_replacement(
    std::vector<std::size_t> population, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates over the first k slots.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population.size() - 1);
    std::swap(population[i], population[pick(rng)]);
  }
  population.resize(k);
  std::sort(population.begin(), population.end());
  return population;
}

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<UncertaintyScore> top_with_scores(
    std::span<const UncertaintyScore> scores, std::size_t m) {
  const auto chosen = select_top(scores, m);
  std::vector<UncertaintyScore> out;
  out.reserve(chosen.size());
  for (auto idx : chosen) {
    const auto it = std::find_if(scores.begin(), scores.end(),
                                 [idx](const auto& s) { return s.index == idx; });
    out.push_back(*it);
  }
  return out;
}

void require_models(const StrategyContext& ctx, bool need_student) {
  if (ctx.teacher == nullptr || ctx.features == nullptr ||
      (need_student && ctx.student == nullptr)) {
    throw std::invalid_argument("strategy: context is missing trained models or features");
  }
}

}  // namespace

std::size_t round_half_up(double x) {
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

void BudgetSchedule::validate() const {
  if (!(initial_fraction > 0.0 && initial_fraction <= final_fraction &&
        final_fraction <= 1.0)) {
    throw std::invalid_argument("schedule: need 0 < initial <= final <= 1");
  }
  if (!(step > 0.0)) throw std::invalid_argument("schedule: step must be > 0");
  const double steps = (final_fraction - initial_fraction) / step;
  if (std::abs(steps - std::round(steps)) > 1e-9) {
    throw std::invalid_argument("schedule: (final - initial) / step must be integral");
  }
}

std::size_t BudgetSchedule::points() const {
  validate();
  return static_cast<std::size_t>(
             std::llround((final_fraction - initial_fraction) / step)) + 1;
}

double BudgetSchedule::fraction_at(std::size_t cycle) const {
  return initial_fraction + static_cast<double>(cycle) * step;
}

std::size_t BudgetSchedule::quota(std::size_t pool_size) const {
  return round_half_up(step * static_cast<double>(pool_size));
}

// ---- PoolState -------------------------------------------------------------

PoolState::PoolState(std::size_t size, std::span<const std::size_t> initial_labeled)
    : size_(size), initial_(initial_labeled.begin(), initial_labeled.end()) {
  if (size == 0) throw std::invalid_argument("pool: dataset size must be positive");
  for (auto i : initial_labeled) {
    if (i >= size) throw std::out_of_range("pool: index " + std::to_string(i) + " out of range");
    if (!labeled_.insert(i).second) {
      throw std::invalid_argument("pool: duplicate initial index " + std::to_string(i));
    }
  }
  std::sort(initial_.begin(), initial_.end());
  for (std::size_t i = 0; i < size; ++i)
    if (!labeled_.count(i)) unlabeled_.insert(i);
  check_invariants();
}

void PoolState::annotate(std::span<const std::size_t> selected) {
  std::set<std::size_t> seen;
  for (auto i : selected) {
    if (!unlabeled_.count(i)) {
      throw std::invalid_argument("annotate: index " + std::to_string(i) +
                                  " is not in the unlabeled pool");
    }
    if (!seen.insert(i).second) {
      throw std::invalid_argument("annotate: index " + std::to_string(i) +
                                  " selected twice");
    }
  }
  if (selected.empty()) return;
  for (auto i : selected) {
    unlabeled_.erase(i);
    labeled_.insert(i);
  }
  history_.emplace_back(seen.begin(), seen.end());
  check_invariants();
}

void PoolState::check_invariants() const {
  if (labeled_.size() + unlabeled_.size() != size_) {
    throw std::logic_error("pool: labeled + unlabeled does not cover the dataset");
  }
  for (auto i : labeled_) {
    if (i >= size_ || unlabeled_.count(i)) {
      throw std::logic_error("pool: labeled and unlabeled overlap at " + std::to_string(i));
    }
  }
  std::vector<std::size_t> expected(initial_);
  for (const auto& h : history_) expected.insert(expected.end(), h.begin(), h.end());
  std::sort(expected.begin(), expected.end());
  if (!std::equal(expected.begin(), expected.end(), labeled_.begin(), labeled_.end())) {
    throw std::logic_error("pool: history does not account for the labeled set");
  }
}

PoolState init_pool(std::size_t n, double initial_fraction, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("init_pool: dataset size must be positive");
  if (!(initial_fraction > 0.0 && initial_fraction <= 1.0)) {
    throw std::invalid_argument("init_pool: fraction must lie in (0,1]");
  }
  const std::size_t k = std::min(n, round_half_up(initial_fraction * static_cast<double>(n)));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto chosen = sample_without_replacement(std::move(all), k, seed);
  return PoolState(n, chosen);
}

std::vector<std::size_t> draw_subset(const PoolState& pool, std::size_t m,
                                     std::uint64_t seed) {
  if (m == 0) throw std::invalid_argument("draw_subset: quota must be >= 1");
  if (pool.unlabeled().empty()) throw std::invalid_argument("draw_subset: unlabeled pool is empty");
  std::vector<std::size_t> population(pool.unlabeled().begin(), pool.unlabeled().end());
  const std::size_t k = std::min(kSubsetFactor * m, population.size());
  return sample_without_replacement(std::move(population), k, seed);
}

std::vector<std::size_t> select_top(std::span<const UncertaintyScore> scores,
                                    std::size_t m) {
  if (scores.size() < m) {
    throw std::invalid_argument("select_top: " + std::to_string(scores.size()) +
                                " scores for a quota of " + std::to_string(m));
  }
  std::vector<UncertaintyScore> sorted(scores.begin(), scores.end());
  const auto better = [](const UncertaintyScore& a, const UncertaintyScore& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.index < b.index;
  };
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m),
                    sorted.end(), better);
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(sorted[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

PoolState annotate(PoolState pool, std::span<const std::size_t> selected) {
  pool.annotate(selected);
  return pool;
}

// ---- strategies ------------------------------------------------------------

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::proposed: return "proposed";
    case StrategyKind::random: return "random";
    case StrategyKind::entropy: return "entropy";
    case StrategyKind::margin: return "margin";
    case StrategyKind::least_confidence: return "least-confidence";
    case StrategyKind::mc_dropout_entropy: return "mc-dropout-entropy";
    case StrategyKind::coreset_kcenter: return "coreset-kcenter";
  }
  return "proposed";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto k : all_strategies())
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::vector<StrategyKind> all_strategies() {
  return {StrategyKind::proposed,         StrategyKind::random,
          StrategyKind::entropy,          StrategyKind::margin,
          StrategyKind::least_confidence, StrategyKind::mc_dropout_entropy,
          StrategyKind::coreset_kcenter};
}

std::vector<UncertaintyScore> score_rows(const BlockModel& teacher,
                                         const BlockModel& student,
                                         const Tensor& features,
                                         std::span<const std::size_t> rows,
                                         UncertaintyMetric metric,
                                         const std::optional<PairCalibration>& calibration,
                                         std::size_t threads) {
  std::vector<UncertaintyScore> out(rows.size());
  parallel_chunks(rows.size(), threads, [&](std::size_t begin, std::size_t end) {
    NoGradGuard no_grad;
    const auto chunk = rows.subspan(begin, end - begin);
    const Tensor x = gather_rows(features, chunk);
    const auto scored = score(teacher.forward(x), student.forward(x), chunk, metric,
                              calibration);
    std::copy(scored.begin(), scored.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return out;
}

std::vector<KCenterPick> kcenter_greedy(const Tensor& labeled,
                                        const Tensor& candidates,
                                        std::span<const std::size_t> candidate_indices,
                                        std::size_t m) {
  if (candidates.rank() != 2 || candidates.dim(0) != candidate_indices.size()) {
    throw ShapeError("kcenter: candidate features " + shape_str(candidates.shape()) +
                     " do not match " + std::to_string(candidate_indices.size()) +
                     " indices");
  }
  if (m > candidate_indices.size()) {
    throw std::invalid_argument("kcenter: quota exceeds candidate count");
  }
  const std::size_t c = candidates.dim(0), d = candidates.dim(1);
  const auto cv = candidates.values();
  auto dist = [d](const double* a, const double* b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(acc);
  };
  std::vector<double> min_d(c, std::numeric_limits<double>::infinity());
  if (labeled.numel() > 0 && labeled.rank() == 2) {
    if (labeled.dim(1) != d) throw ShapeError("kcenter: feature width mismatch");
    const auto lv = labeled.values();
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t l = 0; l < labeled.dim(0); ++l)
        min_d[i] = std::min(min_d[i], dist(&cv[i * d], &lv[l * d]));
  }
  std::vector<bool> taken(c, false);
  std::vector<KCenterPick> picks;
  for (std::size_t round = 0; round < m; ++round) {
    std::size_t best = c;
    for (std::size_t i = 0; i < c; ++i) {
      if (taken[i]) continue;
      if (best == c || min_d[i] > min_d[best] ||
          (min_d[i] == min_d[best] && candidate_indices[i] < candidate_indices[best])) {
        best = i;
      }
    }
    taken[best] = true;
    picks.push_back({candidate_indices[best], min_d[best]});
    for (std::size_t i = 0; i < c; ++i)
      if (!taken[i]) min_d[i] = std::min(min_d[i], dist(&cv[i * d], &cv[best * d]));
  }
  return picks;
}

std::vector<UncertaintyScore> run_strategy(StrategyKind kind,
                                           const StrategyContext& ctx) {
  if (ctx.m == 0) return {};
  if (ctx.candidates.size() < ctx.m) {
    throw std::invalid_argument("strategy: fewer candidates than the quota");
  }
  switch (kind) {
    case StrategyKind::proposed: {
      require_models(ctx, true);
      const auto scores = score_rows(*ctx.teacher, *ctx.student, *ctx.features,
                                     ctx.candidates, ctx.metric, ctx.calibration,
                                     ctx.threads);
      return top_with_scores(scores, ctx.m);
    }
    case StrategyKind::random: {
      std::vector<std::size_t> population(ctx.candidates.begin(), ctx.candidates.end());
      const auto picked = sample_without_replacement(std::move(population), ctx.m, ctx.seed);
      std::vector<UncertaintyScore> out;
      for (auto i : picked) out.push_back({i, 0.0});
      return out;
    }
    case StrategyKind::entropy:
    case StrategyKind::margin:
    case StrategyKind::least_confidence:
    case StrategyKind::mc_dropout_entropy: {
      require_models(ctx, false);
      const Tensor x = gather_rows(*ctx.features, ctx.candidates);
      Tensor posteriors;
      if (kind == StrategyKind::mc_dropout_entropy) {
        const auto passes = forward_mc_dropout(*ctx.teacher, x, ctx.mc_passes,
                                               ctx.mc_drop_prob, ctx.seed);
        std::vector<double> mean_p(passes.front().numel(), 0.0);
        for (const auto& p : passes)
          for (std::size_t i = 0; i < mean_p.size(); ++i) mean_p[i] += p.values()[i];
        for (auto& v : mean_p) v /= static_cast<double>(passes.size());
        posteriors = Tensor::from(passes.front().shape(), std::move(mean_p));
      } else {
        NoGradGuard no_grad;
        posteriors = softmax(ctx.teacher->forward(x).logits);
      }
      const BaselineKind base = kind == StrategyKind::margin ? BaselineKind::margin
                                : kind == StrategyKind::least_confidence
                                    ? BaselineKind::least_confidence
                                    : BaselineKind::entropy;
      const auto values = baseline_scores(posteriors, base);
      std::vector<UncertaintyScore> scores(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) scores[i] = {ctx.candidates[i], values[i]};
      return top_with_scores(scores, ctx.m);
    }
    case StrategyKind::coreset_kcenter: {
      require_models(ctx, false);
      NoGradGuard no_grad;
      const Tensor cand = ctx.teacher->forward(gather_rows(*ctx.features, ctx.candidates)).features;
      const Tensor lab = ctx.labeled.empty()
                             ? Tensor::zeros({1})
                             : ctx.teacher->forward(gather_rows(*ctx.features, ctx.labeled)).features;
      auto picks = kcenter_greedy(lab, flatten(cand), ctx.candidates, ctx.m);
      std::vector<UncertaintyScore> out;
      for (const auto& p : picks) out.push_back({p.index, p.min_distance});
      std::sort(out.begin(), out.end(),
                [](const auto& a, const auto& b) { return a.index < b.index; });
      return out;
    }
  }
  throw std::invalid_argument("strategy: unknown kind");
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "cycle,index,score,strategy\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.cycle << ',' << r.index << ',' << r.score << ',' << r.strategy << '\n';
}

}  // namespace alkt
