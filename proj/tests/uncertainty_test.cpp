// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "alkt/uncertainty.hpp"
#include "test_util.hpp"

namespace alkt {
namespace {

using testing::random_tensor;

std::vector<double> simplex(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& v : p) s += (v = e(rng));
  for (auto& v : p) v /= s;
  return p;
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl_divergence(std::vector{0.3, 0.7}, std::vector{0.3, 0.7}), 0.0);
  EXPECT_NEAR(kl_divergence(std::vector{0.5, 0.5}, std::vector{0.9, 0.1}), 0.510826, 1e-6);
  EXPECT_NEAR(kl_divergence(std::vector{0.9, 0.1}, std::vector{0.5, 0.5}), 0.368064, 1e-6);
}

TEST(Kl, ZeroProbabilitiesAreFloored) {
  const double v = kl_divergence(std::vector{1.0, 0.0}, std::vector{0.0, 1.0});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(kKlEps), 1e-9);
  EXPECT_THROW(kl_divergence(std::vector{1.0}, std::vector{0.5, 0.5}), std::invalid_argument);
}

TEST(KlProperty, NonNegative) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 9;
    EXPECT_GE(kl_divergence(simplex(rng, k), simplex(rng, k)), -1e-15);
  }
}

TEST(MsePosterior, ExampleAndSymmetry) {
  EXPECT_DOUBLE_EQ(mse_posterior(std::vector{1.0, 0.0}, std::vector{0.5, 0.5}), 0.25);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = simplex(rng, 5), b = simplex(rng, 5);
    EXPECT_EQ(mse_posterior(a, b), mse_posterior(b, a));
  }
}

ForwardResult fake_forward(const Tensor& logits, std::vector<Tensor> acts, Tensor features) {
  return {logits, std::move(acts), std::move(features)};
}

TEST(Disagreement, IdenticalModelsScoreZero) {
  std::mt19937_64 rng(3);
  const auto f = fake_forward(random_tensor({4, 3}, rng),
                              {random_tensor({4, 2, 3, 3}, rng), random_tensor({4, 5}, rng)},
                              random_tensor({4, 5}, rng));
  for (auto m : {UncertaintyMetric::kl_posterior, UncertaintyMetric::mse_posterior,
                 UncertaintyMetric::mse_feature, UncertaintyMetric::l1_feature,
                 UncertaintyMetric::attention_distance}) {
    for (double v : disagreement(f, f, m)) EXPECT_NEAR(v, 0.0, 1e-12) << to_string(m);
  }
}

TEST(DisagreementProperty, KlInvariantToLogitShift) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor t = random_tensor({3, 4}, rng, 3.0);
    const Tensor s = random_tensor({3, 4}, rng, 3.0);
    const Tensor shifted = add_scalar(s, 50.0 * (trial - 25));
    const auto a = disagreement(fake_forward(t, {}, Tensor()), fake_forward(s, {}, Tensor()),
                                UncertaintyMetric::kl_posterior);
    const auto b = disagreement(fake_forward(t, {}, Tensor()),
                                fake_forward(shifted, {}, Tensor()),
                                UncertaintyMetric::kl_posterior);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Disagreement, KlUsesTeacherFirst) {
  const Tensor t = Tensor::from({1, 2}, {std::log(0.5), std::log(0.5)});
  const Tensor s = Tensor::from({1, 2}, {std::log(0.9), std::log(0.1)});
  const auto v = disagreement(fake_forward(t, {}, Tensor()), fake_forward(s, {}, Tensor()),
                              UncertaintyMetric::kl_posterior);
  EXPECT_NEAR(v[0], 0.510826, 1e-6);
}

TEST(Calibration, UnitTemperatureIsBitwiseIdentical) {
  std::mt19937_64 rng(5);
  const auto t = fake_forward(random_tensor({6, 4}, rng), {}, Tensor());
  const auto s = fake_forward(random_tensor({6, 4}, rng), {}, Tensor());
  const auto plain = disagreement(t, s, UncertaintyMetric::kl_posterior);
  const auto unit = disagreement(t, s, UncertaintyMetric::kl_posterior, PairCalibration{});
  EXPECT_EQ(plain, unit);
}

TEST(Calibration, SeparateTemperaturesApply) {
  const Tensor t = Tensor::from({1, 2}, {2.0, 0.0});
  const Tensor s = Tensor::from({1, 2}, {1.0, 0.0});
  PairCalibration cal;
  cal.teacher.temperature = 2.0;
  const auto v = disagreement(fake_forward(t, {}, Tensor()), fake_forward(s, {}, Tensor()),
                              UncertaintyMetric::kl_posterior, cal);
  EXPECT_NEAR(v[0], 0.0, 1e-15);
}

TEST(Calibration, GridAndTies) {
  const auto grid = default_temperature_grid();
  ASSERT_EQ(grid.size(), 100u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.05);
  EXPECT_DOUBLE_EQ(grid.back(), 5.0);
  // Zero logits give the same NLL at every temperature: the smallest wins.
  const auto fit = fit_temperature(Tensor::zeros({4, 3}), std::vector<int>{0, 1, 2, 0}, grid);
  EXPECT_DOUBLE_EQ(fit.temperature, 0.05);
}

TEST(Calibration, RecoversOverconfidenceFactor) {
  std::mt19937_64 rng(6);
  const std::size_t n = 4000, k = 3;
  const Tensor z = random_tensor({n, k}, rng, 1.5);
  const Tensor p = softmax(z);
  std::vector<int> y(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double r = u(rng), acc = 0.0;
    y[i] = static_cast<int>(k - 1);
    for (std::size_t c = 0; c < k; ++c) {
      acc += p.at(i * k + c);
      if (r < acc) {
        y[i] = static_cast<int>(c);
        break;
      }
    }
  }
  const auto fit = fit_temperature(scale(z, 2.0), y, default_temperature_grid());
  EXPECT_NEAR(fit.temperature, 2.0, 0.2);
  EXPECT_LE(mean_nll(scale(z, 2.0), y, fit.temperature), mean_nll(scale(z, 2.0), y, 1.0));
}

TEST(Baselines, Examples) {
  const Tensor sure = Tensor::from({1, 3}, {1.0, 0.0, 0.0});
  EXPECT_NEAR(baseline_scores(sure, BaselineKind::entropy)[0], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(baseline_scores(sure, BaselineKind::margin)[0], -1.0);
  EXPECT_DOUBLE_EQ(baseline_scores(sure, BaselineKind::least_confidence)[0], 0.0);
  const Tensor flat = Tensor::full({1, 4}, 0.25);
  EXPECT_NEAR(baseline_scores(flat, BaselineKind::entropy)[0], std::log(4.0), 1e-15);
  const Tensor mid = Tensor::from({1, 3}, {0.5, 0.3, 0.2});
  EXPECT_NEAR(baseline_scores(mid, BaselineKind::margin)[0], -0.2, 1e-15);
  EXPECT_NEAR(baseline_scores(mid, BaselineKind::least_confidence)[0], 0.5, 1e-15);
}

TEST(Scores, IndicesAndCsv) {
  const Tensor t = Tensor::from({2, 2}, {0.0, 0.0, 3.0, 0.0});
  const Tensor s = Tensor::from({2, 2}, {0.0, 0.0, 0.0, 0.0});
  const std::vector<std::size_t> idx{7, 3};
  const auto sc = score(fake_forward(t, {}, Tensor()), fake_forward(s, {}, Tensor()), idx,
                        UncertaintyMetric::kl_posterior);
  ASSERT_EQ(sc.size(), 2u);
  EXPECT_EQ(sc[0].index, 7u);
  EXPECT_EQ(sc[1].index, 3u);
  EXPECT_EQ(sc[0].value, 0.0);
  EXPECT_GT(sc[1].value, 0.0);
  std::ostringstream os;
  write_scores_csv(os, sc, "kl");
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "index,score,metric");
  EXPECT_NE(os.str().find("7,0,kl"), std::string::npos);
}

TEST(Uncertainty, MetricNames) {
  for (auto m : {UncertaintyMetric::kl_posterior, UncertaintyMetric::mse_posterior,
                 UncertaintyMetric::mse_feature, UncertaintyMetric::l1_feature,
                 UncertaintyMetric::attention_distance}) {
    EXPECT_EQ(parse_uncertainty_metric(to_string(m)), m);
  }
  EXPECT_THROW(parse_uncertainty_metric("bald"), std::invalid_argument);
}

}  // namespace
}  // namespace alkt
