// SPDX-License-Identifier: Apache-2.0

#include "alkt/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "alkt/datasets.hpp"
#include "alkt/distill.hpp"
#include "alkt/experiment.hpp"
#include "alkt/gradcheck.hpp"
#include "alkt/nets.hpp"
#include "alkt/optim.hpp"
#include "alkt/selection.hpp"

namespace alkt {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

SelfCheck near(std::string name, double got, double want, double tol) {
  const bool ok = std::abs(got - want) <= tol;
  return {std::move(name), ok, "got " + num(got) + ", want " + num(want) + " +- " + num(tol)};
}

Tensor random_input(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

SelfCheck gradient_check(const std::string& name, const ArchConfig& arch, Shape batch_shape,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelPair pair = build_pair(arch, seed);
  const Tensor x = random_input(std::move(batch_shape), rng);
  std::vector<int> y(x.dim(0));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % arch.num_classes);
  // Zero-initialized biases put dead rows exactly on the ReLU kink, where the
  // one-sided derivative and the central difference legitimately disagree.
  std::normal_distribution<double> nd(0.0, 0.5);
  for (auto* model : {&pair.teacher, &pair.student}) {
    for (auto& p : model->parameters()) {
      for (auto& v : p.mutable_values()) v = nd(rng);
    }
  }
  // The teacher sees only its task loss; the student also carries the
  // transfer term against the (detached) teacher maps.
  auto teacher_params = pair.teacher.parameters();
  auto student_params = pair.student.parameters();
  const auto rt = check_gradients(
      [&] { return cross_entropy(log_softmax(pair.teacher.forward(x).logits), y); },
      teacher_params);
  const auto rs = check_gradients(
      [&] {
        const auto t = pair.teacher.forward(x);
        const auto s = pair.student.forward(x);
        return cross_entropy(log_softmax(s.logits), y) +
               2.0 * transfer_loss(s, t, TransferMetric::attention);
      },
      student_params);
  GradCheckResult r = rt;
  r.max_relative_error = std::max(rt.max_relative_error, rs.max_relative_error);
  r.checked += rs.checked;
  return {name, r.max_relative_error <= 1e-5,
          "max relative error " + num(r.max_relative_error) + " over " +
              std::to_string(r.checked) + " entries"};
}

std::vector<std::size_t> select_top_oracle(std::vector<UncertaintyScore> s, std::size_t m) {
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return a.value != b.value ? a.value > b.value : a.index < b.index;
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(m, s.size()); ++i) out.push_back(s[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<SelfCheck> run_selftest(const SelftestOptions& options) {
  std::vector<SelfCheck> out;
  auto guarded = [&](const std::string& name, const std::function<SelfCheck()>& body) {
    try {
      out.push_back(body());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };

  guarded("gradient-mlp", [] {
    ArchConfig a;
    a.kind = ModelKind::mlp;
    a.widths = {4, 3};
    a.num_classes = 3;
    a.input_shape = {3};
    return gradient_check("gradient-mlp", a, {5, 3}, 11);
  });
  guarded("gradient-cnn", [] {
    ArchConfig a;
    a.kind = ModelKind::cnn;
    a.widths = {2, 3};
    a.num_classes = 2;
    a.input_shape = {1, 5, 5};
    return gradient_check("gradient-cnn", a, {2, 1, 5, 5}, 12);
  });

  guarded("kl-oracle", [&] {
    const double a = kl_divergence(std::vector{0.5, 0.5}, std::vector{0.9, 0.1}, options.kl_eps);
    const double b = kl_divergence(std::vector{0.9, 0.1}, std::vector{0.5, 0.5}, options.kl_eps);
    auto c = near("kl-oracle", a, 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-9);
    auto d = near("kl-oracle", b, 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5), 1e-9);
    return c.passed ? d : c;
  });
  guarded("kl-zero-floor", [&] {
    const double got = kl_divergence(std::vector{1.0, 0.0}, std::vector{0.0, 1.0}, options.kl_eps);
    return near("kl-zero-floor", got, -std::log(1e-12), 1e-9);
  });
  guarded("attention-transfer-oracle", [] {
    const double got = attention_distance(std::vector{1.0, 4.0}, std::vector{4.0, 1.0});
    return near("attention-transfer-oracle", got, 3.0 * std::sqrt(2.0) / std::sqrt(17.0), 1e-12);
  });
  guarded("softmax-shift-invariance", [] {
    const Tensor a = softmax(Tensor::from({1, 3}, {1.0, 2.0, 3.0}));
    const Tensor b = softmax(Tensor::from({1, 3}, {1001.0, 1002.0, 1003.0}));
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(a.at(i) - b.at(i)));
    return near("softmax-shift-invariance", worst, 0.0, 1e-12);
  });
  guarded("sgd-step-oracle", [] {
    SgdConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    Sgd opt(cfg, 10);
    std::vector<Tensor> w{Tensor::parameter({1}, {1.0})};
    w[0].mutable_grad()[0] = 0.5;
    opt.step(w, 0);
    const double first = w[0].at(0);
    w[0].mutable_grad()[0] = 0.5;
    opt.step(w, 0);
    auto c = near("sgd-step-oracle", first, 0.95, 1e-12);
    return c.passed ? near("sgd-step-oracle", w[0].at(0), 0.855, 1e-12) : c;
  });
  guarded("select-top-oracle", [] {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(trial % 37);
      std::vector<UncertaintyScore> s(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = {i * 3 + 1, static_cast<double>(coarse(rng))};
      std::shuffle(s.begin(), s.end(), rng);
      const std::size_t m = static_cast<std::size_t>(trial) % (n + 1);
      if (select_top(s, m) != select_top_oracle(s, m)) {
        return SelfCheck{"select-top-oracle", false, "mismatch at trial " + std::to_string(trial)};
      }
    }
    return SelfCheck{"select-top-oracle", true, "200 random score vectors"};
  });
  guarded("pool-protocol", [] {
    const std::size_t n = 200, m = 10;
    PoolState pool = init_pool(n, 0.10, 5);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t c = 1; c <= 6; ++c) {
      const auto subset = draw_subset(pool, m, 100 + c);
      const std::size_t want = std::min(kSubsetFactor * m, pool.unlabeled().size());
      if (subset.size() != want) {
        return SelfCheck{"pool-protocol", false, "subset size " + std::to_string(subset.size()) +
                                                     " != " + std::to_string(want)};
      }
      std::vector<UncertaintyScore> scores;
      for (auto i : subset) scores.push_back({i, u(rng)});
      pool.annotate(select_top(scores, m));
      pool.check_invariants();
      if (pool.labeled().size() != 20 + c * m) {
        return SelfCheck{"pool-protocol", false, "labeled count off at cycle " + std::to_string(c)};
      }
    }
    return SelfCheck{"pool-protocol", true, "6 cycles, partition and counts hold"};
  });
  guarded("kcenter-oracle", [] {
    const Tensor labeled = Tensor::from({1, 1}, {0.0});
    const Tensor cand = Tensor::from({3, 1}, {1.0, 10.0, 9.0});
    const auto picks = kcenter_greedy(labeled, cand, std::vector<std::size_t>{0, 1, 2}, 2);
    const bool ok = picks.size() == 2 && picks[0].index == 1 && picks[1].index == 0;
    return SelfCheck{"kcenter-oracle", ok, "expected picks at 10 then 1"};
  });
  guarded("bound-check", [] {
    const Dataset data = make_blobs(3, 40, 2, 0.5, 3);
    ArchConfig arch;
    arch.widths = {8, 8};
    arch = bind_arch(arch, data);
    ModelPair pair = build_pair(arch, 4);
    const auto idx = data.indices(SplitTag::train_pool);
    DistillConfig cfg;
    cfg.epochs = 3;
    train_cycle(pair, gather_rows(data.features(), idx), LabelOracle(data).labels(idx), cfg, 5);
    const auto bounds = bound_diagnostic(pair.teacher, pair.student, data.features(), idx,
                                         LabelOracle(data).labels(idx));
    const auto bad = std::count_if(bounds.begin(), bounds.end(),
                                   [](const BoundRecord& b) { return !b.holds(); });
    return SelfCheck{"bound-check", bad == 0,
                     std::to_string(bad) + " violations over " + std::to_string(bounds.size())};
  });
  return out;
}

}  // namespace alkt
