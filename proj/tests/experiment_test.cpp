// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "alkt/experiment.hpp"
#include "test_util.hpp"

namespace alkt {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ExperimentConfig quick_config() {
  ExperimentConfig cfg;
  cfg.arch.widths = {8, 8};
  cfg.distill.epochs = 2;
  cfg.distill.lambda = 10.0;
  return cfg;
}

const Dataset& small_data() {
  static const Dataset d = make_blobs(3, 50, 2, 0.5, 1);
  return d;
}

TEST(Experiment, RecordsPerBudgetPoint) {
  const auto run = run_experiment(small_data(), StrategyKind::proposed, quick_config(), Seeds{});
  ASSERT_EQ(run.records.size(), 7u);
  const std::size_t pool = small_data().indices(SplitTag::train_pool).size();
  const std::size_t m = round_half_up(0.05 * static_cast<double>(pool));
  for (std::size_t c = 0; c < 7; ++c) {
    const auto& r = run.records[c];
    EXPECT_EQ(r.cycle, c);
    EXPECT_DOUBLE_EQ(r.budget_fraction, 0.10 + 0.05 * static_cast<double>(c));
    EXPECT_EQ(r.labeled, run.initial_labeled.size() + c * m);
    EXPECT_NEAR(r.gap_pp, 100.0 * (r.train_accuracy - r.test_accuracy), 1e-12);
    // Picks made at the end of cycle c; the final budget point picks nothing.
    EXPECT_EQ(r.selected.size(), c + 1 < 7 ? m : 0u);
    EXPECT_EQ(r.per_class_accuracy.size(), 3u);
  }
  EXPECT_EQ(final_labeled_set(run).size(), run.records.back().labeled);
  ExperimentConfig shorter = quick_config();
  shorter.schedule.final_fraction = 0.30;
  EXPECT_EQ(run_experiment(small_data(), StrategyKind::random, shorter, Seeds{}).records.size(), 5u);
}

TEST(Experiment, CycleZeroIgnoresStrategy) {
  Seeds a, b;
  b.strategy = 99;
  const auto ra = run_experiment(small_data(), StrategyKind::proposed, quick_config(), a);
  const auto rb = run_experiment(small_data(), StrategyKind::entropy, quick_config(), b);
  EXPECT_EQ(ra.initial_labeled, rb.initial_labeled);
  EXPECT_EQ(ra.records[0].test_accuracy, rb.records[0].test_accuracy);
  EXPECT_EQ(ra.records[0].train_accuracy, rb.records[0].train_accuracy);
}

TEST(Experiment, InfeasibleScheduleRejected) {
  BudgetSchedule s;
  EXPECT_NO_THROW(check_schedule_feasible(s, 120));
  EXPECT_THROW(check_schedule_feasible(s, 5), std::invalid_argument);
  const Dataset tiny = make_blobs(2, 3, 2, 0.5, 1);
  EXPECT_THROW(run_experiment(tiny, StrategyKind::random, quick_config(), Seeds{}),
               std::invalid_argument);
}

TEST(Experiment, ArtifactsAreDeterministic) {
  const auto dir = testing::temp_dir("exp");
  run_experiment(small_data(), StrategyKind::proposed, quick_config(), Seeds{}, dir / "a");
  run_experiment(small_data(), StrategyKind::proposed, quick_config(), Seeds{}, dir / "b");
  for (const char* f : {"records.csv", "bounds.csv", "selection_trace.csv"}) {
    const std::string a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  for (const char* f : {"records.csv", "bounds.csv", "selection_trace.csv", "timing.csv",
                        "manifest.json"}) {
    const std::string text = slurp(dir / "a" / f);
    EXPECT_EQ(text.find("miou"), std::string::npos) << f;
    EXPECT_EQ(text.find("mIoU"), std::string::npos) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_EQ(manifest["strategy"], "proposed");
  EXPECT_TRUE(manifest.contains("git_describe"));
  EXPECT_TRUE(manifest.contains("dataset"));
  EXPECT_EQ(slurp(dir / "a" / "records.csv").substr(0, 8), "cycle,bu");
  EXPECT_EQ(slurp(dir / "a" / "bounds.csv").front(), '#');
  std::filesystem::remove_all(dir);
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  ExperimentConfig one = quick_config(), four = quick_config();
  four.threads = 4;
  const auto a = run_experiment(small_data(), StrategyKind::proposed, one, Seeds{});
  const auto b = run_experiment(small_data(), StrategyKind::proposed, four, Seeds{});
  for (std::size_t c = 0; c < a.records.size(); ++c) {
    EXPECT_EQ(a.records[c].selected, b.records[c].selected);
    EXPECT_EQ(a.records[c].test_accuracy, b.records[c].test_accuracy);
  }
}

TEST(Bound, ExamplesAndTriangleInequality) {
  ArchConfig arch;
  arch.widths = {4};
  arch.num_classes = 2;
  arch.input_shape = {1};
  BlockModel zero(arch, 1);
  zero.set_flat_parameters(std::vector<double>(zero.parameter_count(), 0.0));
  const Tensor x = Tensor::from({2, 1}, {0.3, -0.2});
  const std::vector<std::size_t> idx{0, 1};
  const std::vector<int> y{0, 1};
  const auto same = bound_diagnostic(zero, zero, x, idx, y);
  ASSERT_EQ(same.size(), 2u);
  EXPECT_EQ(same[1].index, 1u);
  for (const auto& b : same) {
    EXPECT_EQ(b.d_teacher_student, 0.0);
    // Uniform posterior vs one-hot over 2 classes.
    EXPECT_NEAR(b.teacher_to_label, std::sqrt(0.5), 1e-15);
    EXPECT_TRUE(b.holds());
  }
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    BlockModel t(arch, 2), s(arch, 1);
    t.initialize(rng());
    s.initialize(rng());
    for (const auto& b : bound_diagnostic(t, s, x, idx, y)) EXPECT_TRUE(b.holds());
  }
}

TEST(Bound, CsvHasNoteAndHeader) {
  std::ostringstream os;
  const std::vector<BoundRecord> b{{1, 3, 0.1, 0.2, 0.25}};
  write_bounds_csv(os, b);
  std::istringstream in(os.str());
  std::string note, header, row;
  std::getline(in, note);
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(note.front(), '#');
  EXPECT_EQ(header, "cycle,index,d_teacher_student,student_to_label,teacher_to_label,holds");
  EXPECT_EQ(row.substr(0, 4), "1,3,");
  EXPECT_EQ(row.back(), '1');
}

TEST(Pearson, Values) {
  EXPECT_NEAR(pearson(std::vector{1.0, 2.0, 3.0}, std::vector{2.0, 4.0, 6.0}), 1.0, 1e-15);
  EXPECT_NEAR(pearson(std::vector{1.0, 2.0, 3.0}, std::vector{3.0, 2.0, 1.0}), -1.0, 1e-15);
  EXPECT_EQ(pearson(std::vector{1.0, 1.0}, std::vector{1.0, 2.0}), 0.0);
}

TEST(Evaluate, ConstantClassModel) {
  ArchConfig arch;
  arch.widths = {2};
  arch.num_classes = 3;
  arch.input_shape = {1};
  BlockModel m(arch, 1);
  std::vector<double> p(m.parameter_count(), 0.0);
  p.back() = 5.0;  // classifier bias of class 2
  m.set_flat_parameters(p);
  const Tensor x = Tensor::from({6, 1}, {0, 1, 2, 3, 4, 5});
  const std::vector<int> y{0, 0, 1, 2, 2, 2};
  const auto r = evaluate(m, x, y, 3);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.per_class_accuracy, (std::vector<double>{0.0, 0.0, 1.0}));
  EXPECT_EQ(r.per_class_count, (std::vector<std::size_t>{2, 1, 3}));
  std::size_t total = 0;
  for (const auto& row : r.confusion)
    for (auto v : row) total += v;
  EXPECT_EQ(total, 6u);
  EXPECT_EQ(r.confusion[0][2], 2u);
  EXPECT_THROW(evaluate(m, Tensor::zeros({0, 1}), std::vector<int>{}, 3), std::invalid_argument);
}

TEST(Study, SelectedDataReportShape) {
  const std::vector<StrategyKind> kinds{StrategyKind::proposed, StrategyKind::random,
                                        StrategyKind::entropy};
  const auto r = selected_data_study(small_data(), quick_config(), 0.2, 10, kinds, Seeds{});
  ASSERT_EQ(r.entries.size(), 3u);
  for (const auto& e : r.entries) {
    EXPECT_EQ(e.selected.size(), 10u);
    ASSERT_TRUE(e.selected_accuracy.has_value());
    EXPECT_GE(*e.selected_accuracy, 0.0);
    EXPECT_LE(*e.selected_accuracy, 1.0);
  }
  EXPECT_EQ(r.initial_labeled, 24u);
  const auto empty = selected_data_study(small_data(), quick_config(), 0.2, 0, kinds, Seeds{});
  for (const auto& e : empty.entries) {
    EXPECT_TRUE(e.selected.empty());
    EXPECT_FALSE(e.selected_accuracy.has_value());
  }
  EXPECT_TRUE(r.to_json().contains("strategies"));
}

TEST(Study, DeeperTransferCoversEveryStrategy) {
  const auto pool = small_data().indices(SplitTag::train_pool);
  std::map<std::string, std::vector<std::size_t>> sets{
      {"proposed", {pool.begin(), pool.begin() + 30}},
      {"random", {pool.begin() + 30, pool.begin() + 60}}};
  ArchConfig arch = bind_arch(quick_config().arch, small_data());
  DistillConfig cfg;
  cfg.epochs = 2;
  const auto out = transfer_to_deeper_study(small_data(), sets, arch, cfg, 1);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& [k, v] : out) {
    EXPECT_TRUE(sets.count(k));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Seeds, DerivedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 1; s <= 5; ++s)
    for (std::uint64_t i = 0; i < 10; ++i) seen.insert(derive_seed(7, s, i));
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_EQ(derive_seed(7, 1, 0), derive_seed(7, 1, 0));
  const Seeds b = Seeds{3, 4, 5}.offset(2);
  EXPECT_EQ(b.data, 5u);
  EXPECT_EQ(b.init, 6u);
  EXPECT_EQ(b.strategy, 7u);
}

TEST(Features, FlattenedForMlpOnImages) {
  const Tensor img = Tensor::zeros({3, 1, 4, 4});
  const Dataset d("img", img, {0, 1, 0}, 2, std::vector<SplitTag>(3, SplitTag::train_pool));
  EXPECT_EQ(model_features(d, ModelKind::mlp).shape(), (Shape{3, 16}));
  EXPECT_EQ(model_features(d, ModelKind::cnn).shape(), (Shape{3, 1, 4, 4}));
  const ArchConfig a = bind_arch(ArchConfig{}, d);
  EXPECT_EQ(a.input_shape, (Shape{16}));
  EXPECT_EQ(a.num_classes, 2u);
}

}  // namespace
}  // namespace alkt
