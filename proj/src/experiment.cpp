// SPDX-License-Identifier: Apache-2.0

#include "alkt/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#ifndef ALKT_GIT_DESCRIBE
#define ALKT_GIT_DESCRIBE "unknown"
#endif

namespace alkt {

namespace {

// Seed streams.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamSubset = 3;
constexpr std::uint64_t kStreamStrategy = 4;
constexpr std::uint64_t kStreamHoldout = 5;

constexpr const char* kBoundNote =
    "bound distances are L2 norms over softmax posteriors and one-hot labels; "
    "selection itself ranks by the configured uncertainty metric";

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(
      std::distance(row.begin(), std::max_element(row.begin(), row.end())));
}

std::vector<double> one_hot(int label, std::size_t k) {
  std::vector<double> y(k, 0.0);
  y[static_cast<std::size_t>(label)] = 1.0;
  return y;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

template <typename T>
std::string join(const std::vector<T>& v, char sep) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
  if (!out) throw std::runtime_error("short write on " + path.string());
}

struct Holdout {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> calib;
};

Holdout split_holdout(const std::vector<std::size_t>& labeled, double fraction,
                      std::uint64_t seed) {
  std::vector<std::size_t> shuffled(labeled);
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::size_t k = round_half_up(fraction * static_cast<double>(labeled.size()));
  k = std::clamp<std::size_t>(k, labeled.size() > 1 ? 1 : 0,
                              labeled.size() > 1 ? labeled.size() - 1 : 0);
  Holdout h;
  h.calib.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
  h.fit.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(k), shuffled.end());
  std::sort(h.calib.begin(), h.calib.end());
  std::sort(h.fit.begin(), h.fit.end());
  return h;
}

}  // namespace

std::string git_describe() { return ALKT_GIT_DESCRIBE; }

std::string library_version() { return "1.0.0"; }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream * 0x100000001ull + index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"model.kind", to_string(arch.kind)},
          {"model.widths", arch.widths},
          {"model.teacher_depth", arch.teacher_depth},
          {"model.student_depth", arch.student_depth},
          {"model.kernel", arch.kernel_size},
          {"distill.lambda", distill.lambda},
          {"distill.transfer_metric", to_string(distill.transfer_metric)},
          {"distill.epochs", distill.epochs},
          {"distill.batch_size", distill.batch_size},
          {"sgd.lr", distill.sgd.learning_rate},
          {"sgd.momentum", distill.sgd.momentum},
          {"sgd.weight_decay", distill.sgd.weight_decay},
          {"sgd.decay_fraction", distill.sgd.decay_epoch_fraction},
          {"sgd.decay_factor", distill.sgd.decay_factor},
          {"sgd.clip_norm", distill.sgd.clip_norm},
          {"schedule.initial", schedule.initial_fraction},
          {"schedule.final", schedule.final_fraction},
          {"schedule.step", schedule.step},
          {"uncertainty.metric", to_string(metric)},
          {"uncertainty.calibrate", calibrate},
          {"uncertainty.calibration_fraction", calibration_fraction},
          {"distill.fine_tune", fine_tune},
          {"mc.passes", mc_passes},
          {"mc.drop_prob", mc_drop_prob}};
}

// ---- evaluation ------------------------------------------------------------

EvalResult evaluate(const BlockModel& model, const Tensor& features,
                    std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("evaluate: empty split");
  NoGradGuard no_grad;
  const Tensor logits = model.forward(features).logits;
  const std::size_t k = logits.dim(1);
  EvalResult r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  r.per_class_count.assign(num_classes, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto pred = argmax(logits.values().subspan(i * k, k));
    const auto truth = static_cast<std::size_t>(labels[i]);
    ++r.confusion[truth][pred];
    ++r.per_class_count[truth];
    if (pred == truth) ++hits;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  r.per_class_accuracy.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (r.per_class_count[c] > 0) {
      r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) /
                                static_cast<double>(r.per_class_count[c]);
    }
  }
  return r;
}

EvalResult evaluate(const BlockModel& model, const Dataset& data, SplitTag split) {
  const auto idx = data.indices(split);
  if (idx.empty()) throw std::invalid_argument("evaluate: empty split");
  const Tensor x = gather_rows(model_features(data, model.arch().kind), idx);
  const auto y = LabelOracle(data).labels(idx);
  return evaluate(model, x, y, data.num_classes());
}

// ---- bound diagnostic ------------------------------------------------------

std::vector<BoundRecord> bound_diagnostic(const BlockModel& teacher,
                                          const BlockModel& student,
                                          const Tensor& features,
                                          std::span<const std::size_t> indices,
                                          std::span<const int> labels) {
  if (indices.size() != labels.size()) {
    throw std::invalid_argument("bound_diagnostic: index/label count mismatch");
  }
  if (indices.empty()) return {};
  NoGradGuard no_grad;
  const Tensor x = gather_rows(features, indices);
  const Tensor pt = softmax(teacher.forward(x).logits);
  const Tensor ps = softmax(student.forward(x).logits);
  const std::size_t k = pt.dim(1);
  std::vector<BoundRecord> out;
  out.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto a = pt.values().subspan(i * k, k);
    const auto b = ps.values().subspan(i * k, k);
    const auto y = one_hot(labels[i], k);
    BoundRecord r;
    r.index = indices[i];
    r.d_teacher_student = l2_distance(a, b);
    r.student_to_label = l2_distance(b, y);
    r.teacher_to_label = l2_distance(a, y);
    out.push_back(r);
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double bound_correlation(std::span<const BoundRecord> bounds) {
  std::vector<double> d, upper;
  for (const auto& b : bounds) {
    d.push_back(b.d_teacher_student);
    upper.push_back(b.d_teacher_student + b.student_to_label);
  }
  return pearson(d, upper);
}

// ---- helpers ---------------------------------------------------------------

Tensor model_features(const Dataset& data, ModelKind kind) {
  const Tensor& x = data.features();
  if (kind == ModelKind::mlp && x.rank() > 2) {
    NoGradGuard no_grad;
    return flatten(x);
  }
  return x;
}

ArchConfig bind_arch(ArchConfig arch, const Dataset& data) {
  arch.num_classes = data.num_classes();
  const Shape s = data.sample_shape();
  arch.input_shape = arch.kind == ModelKind::mlp ? Shape{shape_numel(s)} : s;
  arch.validate();
  return arch;
}

std::vector<std::size_t> final_labeled_set(const RunResult& run) {
  std::vector<std::size_t> out(run.initial_labeled);
  for (const auto& t : run.trace) out.push_back(t.index);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- artifacts -------------------------------------------------------------

void write_records_csv(std::ostream& out, std::span<const CycleRecord> records) {
  out << "cycle,budget_fraction,labeled,train_accuracy,test_accuracy,gap_pp,"
         "per_class_accuracy,selected\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.cycle << ',' << r.budget_fraction << ',' << r.labeled << ','
        << r.train_accuracy << ',' << r.test_accuracy << ',' << r.gap_pp << ','
        << join(r.per_class_accuracy, ';') << ',' << join(r.selected, ';') << '\n';
  }
}

void write_bounds_csv(std::ostream& out, std::span<const BoundRecord> bounds) {
  out << "# " << kBoundNote << '\n';
  out << "cycle,index,d_teacher_student,student_to_label,teacher_to_label,holds\n";
  out << std::setprecision(17);
  for (const auto& b : bounds) {
    out << b.cycle << ',' << b.index << ',' << b.d_teacher_student << ','
        << b.student_to_label << ',' << b.teacher_to_label << ','
        << (b.holds() ? 1 : 0) << '\n';
  }
}

void write_run_artifacts(const std::filesystem::path& dir, const RunResult& run) {
  std::filesystem::create_directories(dir);
  write_file(dir / "records.csv", [&](std::ostream& o) { write_records_csv(o, run.records); });
  write_file(dir / "bounds.csv", [&](std::ostream& o) { write_bounds_csv(o, run.bounds); });
  write_file(dir / "selection_trace.csv",
             [&](std::ostream& o) { write_trace_csv(o, run.trace); });
  write_file(dir / "timing.csv", [&](std::ostream& o) {
    o << "cycle,wall_seconds\n";
    for (const auto& r : run.records) o << r.cycle << ',' << r.wall_seconds << '\n';
  });
  write_file(dir / "manifest.json", [&](std::ostream& o) { o << run.manifest.dump(2) << '\n'; });
}

// ---- driver ----------------------------------------------------------------

void check_schedule_feasible(const BudgetSchedule& schedule, std::size_t pool_size) {
  schedule.validate();
  const std::size_t points = schedule.points();
  const std::size_t initial = round_half_up(schedule.initial_fraction * static_cast<double>(pool_size));
  const std::size_t quota = schedule.quota(pool_size);
  if (initial == 0 || (points > 1 && quota == 0) || initial + (points - 1) * quota > pool_size) {
    throw std::invalid_argument("schedule is infeasible for a pool of " +
                                std::to_string(pool_size) + " samples");
  }
}

RunResult run_experiment(const Dataset& data, StrategyKind strategy,
                         const ExperimentConfig& cfg, const Seeds& seeds,
                         const std::optional<std::filesystem::path>& out_dir,
                         const nlohmann::json& manifest_extra) {
  cfg.schedule.validate();
  cfg.distill.validate();
  const ArchConfig arch = bind_arch(cfg.arch, data);
  const Tensor features = model_features(data, arch.kind);
  const LabelOracle oracle(data);

  const auto train_idx = data.indices(SplitTag::train_pool);
  const auto test_idx = data.indices(SplitTag::test);
  if (train_idx.empty() || test_idx.empty()) {
    throw std::invalid_argument("run_experiment: dataset needs train-pool and test samples");
  }
  const std::size_t n = train_idx.size();
  const std::size_t points = cfg.schedule.points();
  const std::size_t quota = cfg.schedule.quota(n);
  check_schedule_feasible(cfg.schedule, n);
  PoolState pool = init_pool(n, cfg.schedule.initial_fraction, seeds.data);
  std::unordered_map<std::size_t, std::size_t> position_of;
  for (std::size_t p = 0; p < n; ++p) position_of[train_idx[p]] = p;

  const Tensor x_test = gather_rows(features, test_idx);
  const auto y_test = oracle.labels(test_idx);

  RunResult run;
  run.strategy = to_string(strategy);
  for (auto p : pool.labeled()) run.initial_labeled.push_back(train_idx[p]);
  run.manifest = manifest_extra.is_object() ? manifest_extra : nlohmann::json::object();
  run.manifest["strategy"] = run.strategy;
  run.manifest["seeds"] = {{"data", seeds.data}, {"init", seeds.init}, {"strategy", seeds.strategy}};
  run.manifest["experiment"] = cfg.to_json();
  run.manifest["dataset"] = data.manifest();
  run.manifest["git_describe"] = git_describe();
  run.manifest["version"] = library_version();
  run.manifest["quota_per_cycle"] = quota;
  run.manifest["bound_diagnostic"] = kBoundNote;

  std::optional<ModelPair> models;
  try {
    for (std::size_t c = 0; c < points; ++c) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<std::size_t> labeled;
      for (auto p : pool.labeled()) labeled.push_back(train_idx[p]);

      if (!models || !cfg.fine_tune) models = build_pair(arch, derive_seed(seeds.init, kStreamInit, c));

      Holdout split{labeled, {}};
      if (cfg.calibrate) {
        split = split_holdout(labeled, cfg.calibration_fraction,
                              derive_seed(seeds.init, kStreamHoldout, c));
      }
      const Tensor x_fit = gather_rows(features, split.fit);
      const auto y_fit = oracle.labels(split.fit);
      TrainReport report = train_cycle(*models, x_fit, y_fit, cfg.distill,
                                       derive_seed(seeds.init, kStreamShuffle, c));

      std::optional<PairCalibration> calibration;
      if (cfg.calibrate && !split.calib.empty()) {
        NoGradGuard no_grad;
        const Tensor x_cal = gather_rows(features, split.calib);
        const auto y_cal = oracle.labels(split.calib);
        const auto grid = default_temperature_grid();
        calibration = PairCalibration{
            fit_temperature(models->teacher.forward(x_cal).logits, y_cal, grid),
            fit_temperature(models->student.forward(x_cal).logits, y_cal, grid)};
      }

      const EvalResult test = evaluate(models->teacher, x_test, y_test, data.num_classes());
      CycleRecord rec;
      rec.cycle = c;
      rec.budget_fraction = cfg.schedule.fraction_at(c);
      rec.labeled = labeled.size();
      rec.train_accuracy = report.teacher_train_accuracy;
      rec.test_accuracy = test.accuracy;
      rec.gap_pp = 100.0 * (rec.train_accuracy - rec.test_accuracy);
      rec.per_class_accuracy = test.per_class_accuracy;
      run.train_reports.push_back(std::move(report));

      if (c + 1 < points) {
        const auto subset_pos = draw_subset(pool, quota, derive_seed(seeds.strategy, kStreamSubset, c));
        std::vector<std::size_t> candidates;
        for (auto p : subset_pos) candidates.push_back(train_idx[p]);
        StrategyContext ctx;
        ctx.teacher = &models->teacher;
        ctx.student = &models->student;
        ctx.features = &features;
        ctx.candidates = candidates;
        ctx.labeled = labeled;
        ctx.m = quota;
        ctx.seed = derive_seed(seeds.strategy, kStreamStrategy, c);
        ctx.metric = cfg.metric;
        ctx.calibration = calibration;
        ctx.mc_passes = cfg.mc_passes;
        ctx.mc_drop_prob = cfg.mc_drop_prob;
        ctx.threads = cfg.threads;
        const auto picked = run_strategy(strategy, ctx);

        std::vector<std::size_t> picked_idx, picked_pos;
        for (const auto& s : picked) {
          picked_idx.push_back(s.index);
          picked_pos.push_back(position_of.at(s.index));
          run.trace.push_back({c, s.index, s.value, run.strategy});
        }
        auto bounds = bound_diagnostic(models->teacher, models->student, features,
                                       picked_idx, oracle.labels(picked_idx));
        for (auto& b : bounds) b.cycle = c;
        run.bounds.insert(run.bounds.end(), bounds.begin(), bounds.end());
        pool.annotate(picked_pos);
        rec.selected = picked_idx;
      }
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      run.records.push_back(std::move(rec));
      if (out_dir) {
        run.manifest["bound_correlation"] = bound_correlation(run.bounds);
        write_run_artifacts(*out_dir, run);
      }
    }
  } catch (...) {
    if (out_dir) {
      run.manifest["status"] = "failed";
      try {
        write_run_artifacts(*out_dir, run);
      } catch (...) {
      }
    }
    throw;
  }
  run.manifest["bound_correlation"] = bound_correlation(run.bounds);
  run.manifest["status"] = "complete";
  if (out_dir) write_run_artifacts(*out_dir, run);
  return run;
}

// ---- studies ---------------------------------------------------------------

nlohmann::json StudyReport::to_json() const {
  nlohmann::json j;
  j["initial_labeled"] = initial_labeled;
  j["initial_test_accuracy"] = initial_test_accuracy;
  auto& arr = j["strategies"] = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"strategy", e.strategy},
                   {"selected", e.selected},
                   {"selected_accuracy", e.selected_accuracy
                                             ? nlohmann::json(*e.selected_accuracy)
                                             : nlohmann::json(nullptr)},
                   {"retrained_test_accuracy", e.retrained_test_accuracy}});
  }
  return j;
}

StudyReport selected_data_study(const Dataset& data, const ExperimentConfig& cfg,
                                double initial_fraction, std::size_t extra_quota,
                                std::span<const StrategyKind> strategies,
                                const Seeds& seeds, bool use_subset) {
  const ArchConfig arch = bind_arch(cfg.arch, data);
  const Tensor features = model_features(data, arch.kind);
  const LabelOracle oracle(data);
  const auto train_idx = data.indices(SplitTag::train_pool);
  const auto test_idx = data.indices(SplitTag::test);
  const PoolState pool = init_pool(train_idx.size(), initial_fraction, seeds.data);
  if (pool.labeled().size() + extra_quota > train_idx.size()) {
    throw std::invalid_argument("selected_data_study: initial + extra exceeds the pool");
  }
  std::vector<std::size_t> initial;
  for (auto p : pool.labeled()) initial.push_back(train_idx[p]);
  const Tensor x_test = gather_rows(features, test_idx);
  const auto y_test = oracle.labels(test_idx);

  const std::uint64_t init_seed = derive_seed(seeds.init, kStreamInit, 0);
  const std::uint64_t shuffle_seed = derive_seed(seeds.init, kStreamShuffle, 0);
  ModelPair base = build_pair(arch, init_seed);
  train_cycle(base, gather_rows(features, initial), oracle.labels(initial), cfg.distill,
              shuffle_seed);

  StudyReport report;
  report.initial_labeled = initial.size();
  report.initial_test_accuracy =
      evaluate(base.teacher, x_test, y_test, data.num_classes()).accuracy;

  std::vector<std::size_t> candidates;
  if (extra_quota > 0) {
    const auto pos = use_subset
                         ? draw_subset(pool, extra_quota, derive_seed(seeds.strategy, kStreamSubset, 0))
                         : std::vector<std::size_t>(pool.unlabeled().begin(), pool.unlabeled().end());
    for (auto p : pos) candidates.push_back(train_idx[p]);
  }

  for (auto kind : strategies) {
    StudyEntry entry;
    entry.strategy = to_string(kind);
    if (extra_quota > 0) {
      StrategyContext ctx;
      ctx.teacher = &base.teacher;
      ctx.student = &base.student;
      ctx.features = &features;
      ctx.candidates = candidates;
      ctx.labeled = initial;
      ctx.m = extra_quota;
      ctx.seed = derive_seed(seeds.strategy, kStreamStrategy, 0);
      ctx.metric = cfg.metric;
      ctx.mc_passes = cfg.mc_passes;
      ctx.mc_drop_prob = cfg.mc_drop_prob;
      ctx.threads = cfg.threads;
      for (const auto& s : run_strategy(kind, ctx)) entry.selected.push_back(s.index);
      entry.selected_accuracy =
          evaluate(base.teacher, gather_rows(features, entry.selected),
                   oracle.labels(entry.selected), data.num_classes())
              .accuracy;
    }
    std::vector<std::size_t> combined(initial);
    combined.insert(combined.end(), entry.selected.begin(), entry.selected.end());
    std::sort(combined.begin(), combined.end());
    ModelPair retrained = build_pair(arch, init_seed);
    train_cycle(retrained, gather_rows(features, combined), oracle.labels(combined),
                cfg.distill, shuffle_seed);
    entry.retrained_test_accuracy =
        evaluate(retrained.teacher, x_test, y_test, data.num_classes()).accuracy;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::map<std::string, double> transfer_to_deeper_study(
    const Dataset& data, const std::map<std::string, std::vector<std::size_t>>& labeled_sets,
    const ArchConfig& arch_in, const DistillConfig& distill, std::uint64_t seed) {
  const ArchConfig arch = bind_arch(arch_in, data);
  const Tensor features = model_features(data, arch.kind);
  const LabelOracle oracle(data);
  const auto test_idx = data.indices(SplitTag::test);
  const Tensor x_test = gather_rows(features, test_idx);
  const auto y_test = oracle.labels(test_idx);
  std::map<std::string, double> out;
  for (const auto& [strategy, labeled] : labeled_sets) {
    if (labeled.empty()) {
      throw std::invalid_argument("transfer_to_deeper_study: empty labeled set for " + strategy);
    }
    BlockModel model(arch, arch.teacher_depth);
    model.initialize(derive_seed(seed, kStreamInit, 0));
    train_supervised(model, gather_rows(features, labeled), oracle.labels(labeled), distill,
                     derive_seed(seed, kStreamShuffle, 0));
    out[strategy] = evaluate(model, x_test, y_test, data.num_classes()).accuracy;
  }
  return out;
}

}  // namespace alkt
