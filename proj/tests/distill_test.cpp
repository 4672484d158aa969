// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "alkt/datasets.hpp"
#include "alkt/distill.hpp"
#include "alkt/gradcheck.hpp"
#include "test_util.hpp"

namespace alkt {
namespace {

using testing::random_tensor;

TEST(Attention, MapOfChannels) {
  // (C=2, 2 locations): channel sums of squares.
  const Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 0.0});
  EXPECT_EQ(sample_attention_map(a), (std::vector<double>{10.0, 4.0}));
  // Rank 1: one channel over its units.
  EXPECT_EQ(sample_attention_map(Tensor::from({3}, {1.0, -2.0, 0.5})),
            (std::vector<double>{1.0, 4.0, 0.25}));
}

TEST(Attention, DistanceExamples) {
  EXPECT_NEAR(attention_distance(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}), std::sqrt(2.0),
              1e-15);
  EXPECT_NEAR(attention_distance(std::vector{1.0, 4.0}, std::vector{4.0, 1.0}),
              3.0 * std::sqrt(2.0) / std::sqrt(17.0), 1e-15);
  EXPECT_EQ(attention_distance(std::vector{2.0, 3.0}, std::vector{4.0, 6.0}), 0.0);
}

TEST(Attention, DeadMapIsZeroVector) {
  EXPECT_DOUBLE_EQ(attention_distance(std::vector{0.0, 0.0}, std::vector{3.0, 4.0}), 1.0);
  EXPECT_EQ(attention_distance(std::vector{0.0, 0.0}, std::vector{0.0, 0.0}), 0.0);
  const Tensor zero = Tensor::zeros({2, 3});
  const Tensor live = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<Tensor> s{zero}, t{live};
  const auto per = attention_transfer_per_sample(s, t);
  for (double v : per) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(AttentionProperty, ChannelPermutationAndScaleInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = random_tensor({2, 4, 3, 3}, rng);
    const Tensor t = random_tensor({2, 4, 3, 3}, rng);
    // Reverse the channel order of s and scale it by a positive constant.
    const double c = u(rng);
    std::vector<double> v(s.numel());
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t ch = 0; ch < 4; ++ch)
        for (std::size_t k = 0; k < 9; ++k)
          v[(n * 4 + ch) * 9 + k] = c * s.at((n * 4 + (3 - ch)) * 9 + k);
    const Tensor s2 = Tensor::from({2, 4, 3, 3}, v);
    std::vector<Tensor> a{s}, b{s2}, tt{t};
    const auto d1 = attention_transfer_per_sample(a, tt);
    const auto d2 = attention_transfer_per_sample(b, tt);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(d1[i], d2[i], 1e-12);
  }
}

TEST(AttentionProperty, LossRangeAndSymmetry) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t blocks = 1 + trial % 3;
    std::vector<Tensor> s, t;
    for (std::size_t b = 0; b < blocks; ++b) {
      s.push_back(random_tensor({3, 5}, rng));
      t.push_back(random_tensor({3, 5}, rng));
    }
    const double st = attention_transfer_loss(s, t).item();
    const double ts = attention_transfer_loss(t, s).item();
    EXPECT_GE(st, 0.0);
    // Maps are nonnegative, so normalized maps are at most sqrt(2) apart.
    EXPECT_LE(st, std::sqrt(2.0) * static_cast<double>(blocks) + 1e-12);
    EXPECT_NEAR(st, ts, 1e-12);
    EXPECT_NEAR(attention_transfer_loss(s, s).item(), 0.0, 1e-12);
  }
}

TEST(Attention, LossIsBatchMeanOfPerSample) {
  std::mt19937_64 rng(5);
  std::vector<Tensor> s{random_tensor({4, 2, 3, 3}, rng), random_tensor({4, 6}, rng)};
  std::vector<Tensor> t{random_tensor({4, 2, 3, 3}, rng), random_tensor({4, 6}, rng)};
  const auto per = attention_transfer_per_sample(s, t);
  double m = 0.0;
  for (double v : per) m += v / 4.0;
  EXPECT_NEAR(attention_transfer_loss(s, t).item(), m, 1e-12);
}

TEST(Attention, RejectsMismatchedBlocks) {
  std::vector<Tensor> s{Tensor::zeros({2, 3})}, t{Tensor::zeros({2, 4})};
  EXPECT_THROW(attention_transfer_loss(s, t), ShapeError);
  std::vector<Tensor> two{Tensor::zeros({2, 3}), Tensor::zeros({2, 3})};
  EXPECT_THROW(attention_transfer_loss(s, two), ShapeError);
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::vector<Tensor> s{random_tensor({3, 2, 3, 3}, rng, 1.0, true),
                        random_tensor({3, 5}, rng, 1.0, true)};
  const std::vector<Tensor> t{random_tensor({3, 2, 3, 3}, rng), random_tensor({3, 5}, rng)};
  const auto r = check_gradients([&] { return attention_transfer_loss(s, t); }, s);
  EXPECT_LT(r.max_relative_error, 1e-6);
  EXPECT_EQ(r.checked, 3u * 18u + 15u);
}

TEST(Attention, TeacherSideGetsNoGradient) {
  std::mt19937_64 rng(7);
  std::vector<Tensor> s{random_tensor({2, 4}, rng, 1.0, true)};
  std::vector<Tensor> t{random_tensor({2, 4}, rng, 1.0, true)};
  attention_transfer_loss(s, t).backward();
  EXPECT_TRUE(s[0].has_grad());
  EXPECT_FALSE(t[0].has_grad());
}

TEST(Distill, MetricNames) {
  for (auto m : {TransferMetric::attention, TransferMetric::mse_feature,
                 TransferMetric::l1_feature, TransferMetric::kl_posterior}) {
    EXPECT_EQ(parse_transfer_metric(to_string(m)), m);
  }
  EXPECT_THROW(parse_transfer_metric("cosine"), std::invalid_argument);
}

ArchConfig small_arch(std::size_t dims, std::size_t classes) {
  ArchConfig a;
  a.widths = {16, 16};
  a.num_classes = classes;
  a.input_shape = {dims};
  return a;
}

TEST(Distill, ZeroLambdaMatchesSupervisedStudent) {
  const Dataset d = make_blobs(3, 30, 2, 0.5, 1);
  const auto idx = d.indices(SplitTag::train_pool);
  const Tensor x = gather_rows(d.features(), idx);
  const auto y = LabelOracle(d).labels(idx);
  DistillConfig cfg;
  cfg.lambda = 0.0;
  cfg.epochs = 5;
  ModelPair pair = build_pair(small_arch(2, 3), 9);
  BlockModel alone = pair.student;
  train_cycle(pair, x, y, cfg, 4);
  train_supervised(alone, x, y, cfg, 4);
  EXPECT_EQ(pair.student.flat_parameters(), alone.flat_parameters());
}

TEST(Distill, SeparableBlobsAreLearned) {
  const Dataset d = make_blobs(3, 60, 2, 0.05, 2);
  const auto idx = d.indices(SplitTag::train_pool);
  const Tensor x = gather_rows(d.features(), idx);
  const auto y = LabelOracle(d).labels(idx);
  DistillConfig cfg;
  cfg.epochs = 30;
  ModelPair pair = build_pair(small_arch(2, 3), 3);
  const auto report = train_cycle(pair, x, y, cfg, 5);
  EXPECT_DOUBLE_EQ(report.teacher_train_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(accuracy(pair.teacher, x, y), 1.0);
  EXPECT_EQ(report.epochs.size(), 30u);
}

TEST(Distill, TransferLossDecreases) {
  const Dataset d = make_blobs(4, 50, 2, 0.45, 7);
  const auto idx = d.indices(SplitTag::train_pool);
  const Tensor x = gather_rows(d.features(), idx);
  const auto y = LabelOracle(d).labels(idx);
  DistillConfig cfg;
  cfg.epochs = 20;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelPair pair = build_pair(small_arch(2, 4), seed);
    const auto report = train_cycle(pair, x, y, cfg, seed + 100);
    EXPECT_LT(report.epochs.back().transfer_loss, report.epochs.front().transfer_loss)
        << "seed " << seed;
  }
}

TEST(Distill, TrainingIsDeterministic) {
  const Dataset d = make_blobs(3, 20, 2, 0.5, 1);
  const auto idx = d.indices(SplitTag::train_pool);
  const Tensor x = gather_rows(d.features(), idx);
  const auto y = LabelOracle(d).labels(idx);
  DistillConfig cfg;
  cfg.epochs = 3;
  ModelPair a = build_pair(small_arch(2, 3), 1), b = build_pair(small_arch(2, 3), 1);
  train_cycle(a, x, y, cfg, 2);
  train_cycle(b, x, y, cfg, 2);
  EXPECT_EQ(a.teacher.flat_parameters(), b.teacher.flat_parameters());
  EXPECT_EQ(a.student.flat_parameters(), b.student.flat_parameters());
}

TEST(Distill, RejectsEmptyOrBadInput) {
  ModelPair pair = build_pair(small_arch(2, 3), 1);
  DistillConfig cfg;
  EXPECT_THROW(train_cycle(pair, Tensor::zeros({0, 2}), std::vector<int>{}, cfg, 1),
               std::invalid_argument);
  EXPECT_THROW(train_cycle(pair, Tensor::zeros({2, 2}), std::vector<int>{0}, cfg, 1),
               std::invalid_argument);
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = DistillConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Distill, NonFiniteLossThrows) {
  const Dataset d = make_blobs(2, 10, 2, 0.5, 1);
  const auto idx = d.indices(SplitTag::train_pool);
  const auto y = LabelOracle(d).labels(idx);
  std::vector<double> v(idx.size() * 2, 1e300);
  ModelPair pair = build_pair(small_arch(2, 2), 1);
  DistillConfig cfg;
  cfg.epochs = 2;
  EXPECT_THROW(train_cycle(pair, Tensor::from({idx.size(), 2}, v), y, cfg, 1), std::runtime_error);
}

}  // namespace
}  // namespace alkt
