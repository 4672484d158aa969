// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "alkt/optim.hpp"

namespace alkt {
namespace {

SgdConfig plain(double lr, double momentum, double wd) {
  SgdConfig c;
  c.learning_rate = lr;
  c.momentum = momentum;
  c.weight_decay = wd;
  c.clip_norm = 0.0;
  return c;
}

TEST(Sgd, TwoStepHandValues) {
  Sgd opt(plain(0.1, 0.9, 0.0), 10);
  std::vector<Tensor> w{Tensor::parameter({1}, {1.0})};
  w[0].mutable_grad()[0] = 0.5;
  opt.step(w, 0);
  // v = 0.5, w = 1 - 0.1 * 0.5
  EXPECT_DOUBLE_EQ(w[0].at(0), 0.95);
  EXPECT_FALSE(w[0].has_grad());
  w[0].mutable_grad()[0] = 0.5;
  opt.step(w, 0);
  // v = 0.9 * 0.5 + 0.5 = 0.95, w = 0.95 - 0.095
  EXPECT_NEAR(w[0].at(0), 0.855, 1e-15);
}

TEST(Sgd, WeightDecayIsCoupled) {
  Sgd opt(plain(0.1, 0.0, 0.5), 10);
  std::vector<Tensor> w{Tensor::parameter({1}, {2.0})};
  w[0].mutable_grad()[0] = 0.0;
  opt.step(w, 0);
  EXPECT_DOUBLE_EQ(w[0].at(0), 2.0 - 0.1 * (0.5 * 2.0));
}

TEST(Sgd, StepDecaySchedule) {
  SgdConfig c = plain(0.1, 0.9, 0.0);
  c.decay_epoch_fraction = 0.8;
  c.decay_factor = 0.1;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0, 100), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 79, 100), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 80, 100), 0.1 * 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 99, 100), 0.1 * 0.1);
}

TEST(Sgd, ClipBoundsGlobalNorm) {
  SgdConfig c = plain(1.0, 0.0, 0.0);
  c.clip_norm = 1.0;
  Sgd opt(c, 10);
  std::vector<Tensor> w{Tensor::parameter({1}, {0.0}), Tensor::parameter({1}, {0.0})};
  w[0].mutable_grad()[0] = 3.0;
  w[1].mutable_grad()[0] = 4.0;
  opt.step(w, 0);
  EXPECT_DOUBLE_EQ(w[0].at(0), -0.6);
  EXPECT_DOUBLE_EQ(w[1].at(0), -0.8);
}

TEST(Sgd, ClipLeavesSmallGradientsAlone) {
  SgdConfig c = plain(1.0, 0.0, 0.0);
  c.clip_norm = 10.0;
  Sgd opt(c, 10);
  std::vector<Tensor> w{Tensor::parameter({1}, {0.0})};
  w[0].mutable_grad()[0] = 3.0;
  opt.step(w, 0);
  EXPECT_DOUBLE_EQ(w[0].at(0), -3.0);
}

TEST(Sgd, MissingGradientIsZero) {
  Sgd opt(plain(0.1, 0.9, 0.0), 1);
  std::vector<Tensor> w{Tensor::parameter({2}, {1.0, 2.0})};
  opt.step(w, 0);
  EXPECT_DOUBLE_EQ(w[0].at(0), 1.0);
  EXPECT_DOUBLE_EQ(w[0].at(1), 2.0);
}

TEST(Sgd, ConfigValidation) {
  EXPECT_THROW(plain(0.0, 0.9, 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(plain(0.1, 1.0, 0.0).validate(), std::invalid_argument);
  EXPECT_THROW(plain(0.1, 0.9, -1.0).validate(), std::invalid_argument);
  SgdConfig c = plain(0.1, 0.9, 0.0);
  c.decay_factor = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = plain(0.1, 0.9, 0.0);
  c.decay_epoch_fraction = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(SgdConfig{}.validate());
}

}  // namespace
}  // namespace alkt
