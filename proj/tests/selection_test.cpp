// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "alkt/datasets.hpp"
#include "alkt/distill.hpp"
#include "alkt/experiment.hpp"
#include "alkt/selection.hpp"

namespace alkt {
namespace {

TEST(RoundHalfUp, Pinned) {
  EXPECT_EQ(round_half_up(0.5), 1u);
  EXPECT_EQ(round_half_up(1.5), 2u);
  EXPECT_EQ(round_half_up(2.5), 3u);
  EXPECT_EQ(round_half_up(2.4999), 2u);
  EXPECT_EQ(round_half_up(0.05 * 1600), 80u);
  EXPECT_EQ(round_half_up(0.10 * 1600), 160u);
  EXPECT_EQ(round_half_up(0.0), 0u);
}

TEST(Schedule, PointsAndQuota) {
  BudgetSchedule s;
  EXPECT_EQ(s.points(), 7u);
  EXPECT_DOUBLE_EQ(s.fraction_at(0), 0.10);
  EXPECT_DOUBLE_EQ(s.fraction_at(6), 0.40);
  EXPECT_EQ(s.quota(1600), 80u);
  s.final_fraction = 0.30;
  EXPECT_EQ(s.points(), 5u);
  s.step = 0.07;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = BudgetSchedule{};
  s.initial_fraction = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Pool, InitialDraw) {
  const PoolState p = init_pool(1600, 0.10, 3);
  EXPECT_EQ(p.labeled().size(), 160u);
  EXPECT_EQ(p.unlabeled().size(), 1440u);
  EXPECT_EQ(init_pool(1600, 0.10, 3).labeled(), p.labeled());
  EXPECT_NE(init_pool(1600, 0.10, 4).labeled(), p.labeled());
  EXPECT_EQ(init_pool(10, 1.0, 1).unlabeled().size(), 0u);
  EXPECT_THROW(init_pool(0, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(init_pool(10, 0.0, 1), std::invalid_argument);
}

TEST(Pool, SubsetSizes) {
  const PoolState big = init_pool(1000, 0.10, 1);
  const auto s = draw_subset(big, 5, 2);
  EXPECT_EQ(s.size(), 50u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  for (auto i : s) EXPECT_TRUE(big.unlabeled().count(i));
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), s.size());
  // Fewer unlabeled than 10*m: take them all.
  const PoolState small = init_pool(40, 0.25, 1);
  EXPECT_EQ(draw_subset(small, 5, 2).size(), 30u);
  const PoolState tiny = init_pool(20, 0.5, 1);
  EXPECT_EQ(draw_subset(tiny, 1, 2).size(), 10u);
  EXPECT_THROW(draw_subset(big, 0, 2), std::invalid_argument);
}

TEST(SelectTop, Examples) {
  const std::vector<UncertaintyScore> s{{10, 0.5}, {11, 0.9}, {12, 0.1}, {13, 0.9}};
  EXPECT_EQ(select_top(s, 2), (std::vector<std::size_t>{11, 13}));
  EXPECT_EQ(select_top(s, 3), (std::vector<std::size_t>{10, 11, 13}));
  EXPECT_TRUE(select_top(s, 0).empty());
  // Ties go to the smaller index.
  const std::vector<UncertaintyScore> tie{{5, 1.0}, {2, 1.0}, {9, 1.0}};
  EXPECT_EQ(select_top(tie, 2), (std::vector<std::size_t>{2, 5}));
  EXPECT_THROW(select_top(s, 5), std::invalid_argument);
}

TEST(SelectTopProperty, MatchesSortOracle) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coarse(0, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 60);
    std::vector<UncertaintyScore> s(n);
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < n; ++i) s[i] = {ids[i] * 7, coarse(rng) / 4.0};
    const std::size_t m = static_cast<std::size_t>(trial) % (n + 1);
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return a.value != b.value ? a.value > b.value : a.index < b.index;
    });
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < m; ++i) want.push_back(sorted[i].index);
    std::sort(want.begin(), want.end());
    ASSERT_EQ(select_top(s, m), want) << "trial " << trial;
  }
}

TEST(Pool, AnnotateRulesAndHistory) {
  PoolState p(10, std::vector<std::size_t>{0, 1});
  EXPECT_THROW(p.annotate(std::vector<std::size_t>{1}), std::invalid_argument);
  EXPECT_THROW(p.annotate(std::vector<std::size_t>{3, 3}), std::invalid_argument);
  EXPECT_THROW(p.annotate(std::vector<std::size_t>{10}), std::invalid_argument);
  p.annotate(std::vector<std::size_t>{});
  EXPECT_TRUE(p.history().empty());
  p.annotate(std::vector<std::size_t>{5, 4});
  EXPECT_EQ(p.labeled(), (std::set<std::size_t>{0, 1, 4, 5}));
  ASSERT_EQ(p.history().size(), 1u);
  EXPECT_EQ(p.history()[0], (std::vector<std::size_t>{4, 5}));
  const PoolState q = annotate(p, std::vector<std::size_t>{9});
  EXPECT_EQ(q.labeled().size(), 5u);
  EXPECT_EQ(p.labeled().size(), 4u);
}

TEST(PoolProperty, LabeledGrowsByQuota) {
  std::mt19937_64 rng(10);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 100 + seed * 37;
    BudgetSchedule sched;
    const std::size_t m = sched.quota(n);
    PoolState p = init_pool(n, sched.initial_fraction, seed);
    const std::size_t start = p.labeled().size();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t c = 1; c < sched.points(); ++c) {
      std::vector<UncertaintyScore> scores;
      for (auto i : draw_subset(p, m, seed * 100 + c)) scores.push_back({i, u(rng)});
      p.annotate(select_top(scores, m));
      EXPECT_EQ(p.labeled().size(), start + c * m);
      EXPECT_EQ(p.labeled().size() + p.unlabeled().size(), n);
    }
  }
}

TEST(KCenter, PicksFarthestFirst) {
  const Tensor labeled = Tensor::from({1, 1}, {0.0});
  const Tensor cand = Tensor::from({3, 1}, {1.0, 10.0, 9.0});
  const std::vector<std::size_t> idx{0, 1, 2};
  const auto one = kcenter_greedy(labeled, cand, idx, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].index, 1u);
  EXPECT_DOUBLE_EQ(one[0].min_distance, 10.0);
  const auto two = kcenter_greedy(labeled, cand, idx, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[1].index, 0u);
  EXPECT_DOUBLE_EQ(two[1].min_distance, 1.0);
  EXPECT_THROW(kcenter_greedy(labeled, cand, idx, 4), std::invalid_argument);
}

TEST(Strategy, Names) {
  for (auto k : all_strategies()) EXPECT_EQ(parse_strategy(to_string(k)), k);
  EXPECT_EQ(all_strategies().size(), 7u);
  EXPECT_THROW(parse_strategy("bald"), std::invalid_argument);
}

class StrategyContract : public ::testing::TestWithParam<StrategyKind> {};

TEST_P(StrategyContract, ReturnsQuotaFromCandidates) {
  const Dataset d = make_blobs(3, 40, 2, 0.5, 1);
  ArchConfig arch;
  arch.widths = {8, 8};
  arch = bind_arch(arch, d);
  ModelPair pair = build_pair(arch, 2);
  const auto pool = d.indices(SplitTag::train_pool);
  DistillConfig cfg;
  cfg.epochs = 2;
  const std::vector<std::size_t> labeled(pool.begin(), pool.begin() + 10);
  train_cycle(pair, gather_rows(d.features(), labeled), LabelOracle(d).labels(labeled), cfg, 3);
  const std::vector<std::size_t> candidates(pool.begin() + 20, pool.begin() + 60);
  StrategyContext ctx;
  ctx.teacher = &pair.teacher;
  ctx.student = &pair.student;
  ctx.features = &d.features();
  ctx.candidates = candidates;
  ctx.labeled = labeled;
  ctx.m = 7;
  ctx.seed = 4;
  const auto out = run_strategy(GetParam(), ctx);
  ASSERT_EQ(out.size(), 7u);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) EXPECT_LT(out[i - 1].index, out[i].index);
    EXPECT_TRUE(std::find(candidates.begin(), candidates.end(), out[i].index) != candidates.end());
    seen.insert(out[i].index);
  }
  EXPECT_EQ(seen.size(), 7u);
  const auto again = run_strategy(GetParam(), ctx);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].index, again[i].index);
  ctx.m = 41;
  EXPECT_THROW(run_strategy(GetParam(), ctx), std::invalid_argument);
}

INSTANTIATE_TEST_SUITE_P(All, StrategyContract, ::testing::ValuesIn(all_strategies()),
                         [](const auto& info) {
                           auto name = to_string(info.param);
                           std::replace(name.begin(), name.end(), '-', '_');
                           return name;
                         });

TEST(Strategy, RandomDependsOnSeed) {
  std::vector<std::size_t> candidates(100);
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  StrategyContext ctx;
  ctx.candidates = candidates;
  ctx.m = 10;
  ctx.seed = 1;
  const auto a = run_strategy(StrategyKind::random, ctx);
  ctx.seed = 2;
  const auto b = run_strategy(StrategyKind::random, ctx);
  std::vector<std::size_t> ia, ib;
  for (auto& s : a) ia.push_back(s.index);
  for (auto& s : b) ib.push_back(s.index);
  EXPECT_NE(ia, ib);
}

TEST(Strategy, ModelStrategiesNeedModels) {
  std::vector<std::size_t> candidates{0, 1, 2};
  StrategyContext ctx;
  ctx.candidates = candidates;
  ctx.m = 1;
  EXPECT_THROW(run_strategy(StrategyKind::proposed, ctx), std::invalid_argument);
  EXPECT_THROW(run_strategy(StrategyKind::entropy, ctx), std::invalid_argument);
}

TEST(Trace, CsvFormat) {
  const std::vector<TraceRow> rows{{1, 42, 0.5, "proposed"}, {2, 7, 0.25, "proposed"}};
  std::ostringstream os;
  write_trace_csv(os, rows);
  EXPECT_EQ(os.str(), "cycle,index,score,strategy\n1,42,0.5,proposed\n2,7,0.25,proposed\n");
}

}  // namespace
}  // namespace alkt
