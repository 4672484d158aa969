// SPDX-License-Identifier: Apache-2.0

#include "alkt/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace alkt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && (line[i] == '#' || line[i] == ';')) return line.substr(0, i);
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

std::string unquote_value(std::string v, const std::string& where) {
  if (!v.empty() && v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError(where + ": unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError(where + ": unterminated list");
    std::string inner = v.substr(1, v.size() - 2);
    std::string out;
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty() && item.front() == '"' && item.back() == '"' && item.size() >= 2) {
        item = item.substr(1, item.size() - 2);
      }
      if (!out.empty()) out += ',';
      out += item;
    }
    return out;
  }
  return v;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ',';
    out += f(x);
  }
  return out;
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return fmt_double(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (const auto& x : v) {
      if (!out.empty()) out += ',';
      out += json_scalar(x);
    }
    return out;
  }
  return v.dump();
}

void flatten_json(const nlohmann::json& obj, const std::string& prefix, KeyValues& out) {
  for (const auto& [k, v] : obj.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten_json(v, key, out);
    } else {
      out[key] = json_scalar(v);
    }
  }
}

// Typed readers; every failure names the key.
struct Reader {
  const KeyValues& values;

  const std::string* find(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  }

  std::uint64_t u64(const std::string& key, std::uint64_t dflt) const {
    const auto* s = find(key);
    if (!s) return dflt;
    std::uint64_t v = 0;
    const auto* end = s->data() + s->size();
    auto [p, ec] = std::from_chars(s->data(), end, v);
    if (ec != std::errc() || p != end) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + *s + "'");
    }
    return v;
  }

  std::size_t size(const std::string& key, std::size_t dflt) const {
    return static_cast<std::size_t>(u64(key, dflt));
  }

  double real(const std::string& key, double dflt) const {
    const auto* s = find(key);
    if (!s) return dflt;
    try {
      std::size_t used = 0;
      const double v = std::stod(*s, &used);
      if (used != s->size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": expected a number, got '" + *s + "'");
    }
  }

  bool boolean(const std::string& key, bool dflt) const {
    const auto* s = find(key);
    if (!s) return dflt;
    if (*s == "true" || *s == "1" || *s == "yes") return true;
    if (*s == "false" || *s == "0" || *s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + *s + "'");
  }

  std::string text(const std::string& key, const std::string& dflt) const {
    const auto* s = find(key);
    return s ? *s : dflt;
  }

  template <typename F>
  auto named(const std::string& key, const std::string& dflt, F parse) const {
    const std::string s = text(key, dflt);
    try {
      return parse(s);
    } catch (const std::exception& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
};

}  // namespace

KeyValues parse_config_text(std::string_view text, const std::string& source) {
  KeyValues out;
  std::string section;
  std::stringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section)) {
        throw ConfigError(where + ": invalid section name '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    const std::string value = unquote_value(trim(std::string_view(line).substr(eq + 1)), where);
    if (!out.emplace(full, value).second) {
      throw ConfigError(where + ": duplicate key '" + full + "'");
    }
  }
  return out;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
    KeyValues out;
    flatten_json(j.contains("config") && j["config"].is_object() ? j["config"] : j, "", out);
    return out;
  }
  return parse_config_text(buf.str(), path.string());
}

KeyValues default_values() { return RunConfig{}.to_values(); }

RunConfig RunConfig::from_values(const KeyValues& values) {
  const KeyValues defaults = default_values();
  for (const auto& [k, v] : values) {
    if (k != "seed" && !defaults.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  const Reader r{values};
  RunConfig c;

  auto& d = c.dataset;
  d.kind = r.text("dataset.kind", d.kind);
  if (d.kind != "blobs" && d.kind != "csv" && d.kind != "idx") {
    throw ConfigError("dataset.kind: expected blobs, csv or idx, got '" + d.kind + "'");
  }
  d.classes = r.size("dataset.classes", d.classes);
  d.per_class = r.size("dataset.per_class", d.per_class);
  d.dims = r.size("dataset.dims", d.dims);
  d.spread = r.real("dataset.spread", d.spread);
  d.seed = r.u64("dataset.seed", d.seed);
  d.path = r.text("dataset.path", d.path);
  d.labels_path = r.text("dataset.labels_path", d.labels_path);
  d.normalization = r.text("dataset.normalization", d.normalization);
  if (d.normalization != "auto") {
    r.named("dataset.normalization", d.normalization, parse_normalization);
  }
  d.test_fraction = r.real("dataset.test_fraction", d.test_fraction);
  d.class_fractions.clear();
  for (const auto& s : split_list(r.text("dataset.class_fractions", ""))) {
    KeyValues one{{"dataset.class_fractions", s}};
    d.class_fractions.push_back(Reader{one}.real("dataset.class_fractions", 0.0));
  }

  const std::string strategy = r.text("strategy", "proposed");
  c.strategies.clear();
  if (strategy == "all") {
    c.strategies = all_strategies();
  } else {
    for (const auto& s : split_list(strategy)) {
      try {
        c.strategies.push_back(parse_strategy(s));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("strategy: ") + e.what());
      }
    }
  }

  auto& e = c.experiment;
  e.arch.kind = r.named("model.kind", to_string(e.arch.kind), parse_model_kind);
  const auto widths = split_list(r.text("model.widths", ""));
  if (r.find("model.widths")) {
    e.arch.widths.clear();
    for (const auto& w : widths) {
      KeyValues one{{"model.widths", w}};
      e.arch.widths.push_back(Reader{one}.size("model.widths", 0));
    }
  }
  e.arch.teacher_depth = r.size("model.teacher_depth", e.arch.teacher_depth);
  e.arch.student_depth = r.size("model.student_depth", e.arch.student_depth);
  e.arch.kernel_size = r.size("model.kernel", e.arch.kernel_size);

  e.distill.lambda = r.real("distill.lambda", e.distill.lambda);
  e.distill.transfer_metric = r.named("distill.transfer_metric",
                                      to_string(e.distill.transfer_metric),
                                      parse_transfer_metric);
  e.distill.epochs = r.size("distill.epochs", e.distill.epochs);
  e.distill.batch_size = r.size("distill.batch_size", e.distill.batch_size);
  e.fine_tune = r.boolean("distill.fine_tune", e.fine_tune);

  auto& s = e.distill.sgd;
  s.learning_rate = r.real("sgd.lr", s.learning_rate);
  s.momentum = r.real("sgd.momentum", s.momentum);
  s.weight_decay = r.real("sgd.weight_decay", s.weight_decay);
  s.decay_epoch_fraction = r.real("sgd.decay_fraction", s.decay_epoch_fraction);
  s.decay_factor = r.real("sgd.decay_factor", s.decay_factor);
  s.clip_norm = r.real("sgd.clip_norm", s.clip_norm);

  e.schedule.initial_fraction = r.real("schedule.initial", e.schedule.initial_fraction);
  e.schedule.final_fraction = r.real("schedule.final", e.schedule.final_fraction);
  e.schedule.step = r.real("schedule.step", e.schedule.step);

  e.metric = r.named("uncertainty.metric", to_string(e.metric), parse_uncertainty_metric);
  e.calibrate = r.boolean("uncertainty.calibrate", e.calibrate);
  e.calibration_fraction = r.real("uncertainty.calibration_fraction", e.calibration_fraction);
  e.mc_passes = r.size("mc.passes", e.mc_passes);
  e.mc_drop_prob = r.real("mc.drop_prob", e.mc_drop_prob);

  const std::uint64_t base = r.u64("seed", c.seeds.data);
  c.seeds = {base, base, base};
  c.seeds.data = r.u64("seeds.data", c.seeds.data);
  c.seeds.init = r.u64("seeds.init", c.seeds.init);
  c.seeds.strategy = r.u64("seeds.strategy", c.seeds.strategy);

  c.repeat = r.size("repeat", c.repeat);
  c.output_dir = r.text("output.dir", c.output_dir);
  c.validate();
  return c;
}

KeyValues RunConfig::to_values() const {
  const auto& e = experiment;
  const auto& d = dataset;
  KeyValues v;
  v["dataset.kind"] = d.kind;
  v["dataset.classes"] = std::to_string(d.classes);
  v["dataset.per_class"] = std::to_string(d.per_class);
  v["dataset.dims"] = std::to_string(d.dims);
  v["dataset.spread"] = fmt_double(d.spread);
  v["dataset.seed"] = std::to_string(d.seed);
  v["dataset.path"] = d.path;
  v["dataset.labels_path"] = d.labels_path;
  v["dataset.normalization"] = d.normalization;
  v["dataset.test_fraction"] = fmt_double(d.test_fraction);
  v["dataset.class_fractions"] =
      join_list<double>(d.class_fractions, [](const double& x) { return fmt_double(x); });
  v["strategy"] = join_list<StrategyKind>(
      strategies, [](const StrategyKind& k) { return to_string(k); });
  v["model.kind"] = to_string(e.arch.kind);
  v["model.widths"] = join_list<std::size_t>(
      e.arch.widths, [](const std::size_t& w) { return std::to_string(w); });
  v["model.teacher_depth"] = std::to_string(e.arch.teacher_depth);
  v["model.student_depth"] = std::to_string(e.arch.student_depth);
  v["model.kernel"] = std::to_string(e.arch.kernel_size);
  v["distill.lambda"] = fmt_double(e.distill.lambda);
  v["distill.transfer_metric"] = to_string(e.distill.transfer_metric);
  v["distill.epochs"] = std::to_string(e.distill.epochs);
  v["distill.batch_size"] = std::to_string(e.distill.batch_size);
  v["distill.fine_tune"] = e.fine_tune ? "true" : "false";
  v["sgd.lr"] = fmt_double(e.distill.sgd.learning_rate);
  v["sgd.momentum"] = fmt_double(e.distill.sgd.momentum);
  v["sgd.weight_decay"] = fmt_double(e.distill.sgd.weight_decay);
  v["sgd.decay_fraction"] = fmt_double(e.distill.sgd.decay_epoch_fraction);
  v["sgd.decay_factor"] = fmt_double(e.distill.sgd.decay_factor);
  v["sgd.clip_norm"] = fmt_double(e.distill.sgd.clip_norm);
  v["schedule.initial"] = fmt_double(e.schedule.initial_fraction);
  v["schedule.final"] = fmt_double(e.schedule.final_fraction);
  v["schedule.step"] = fmt_double(e.schedule.step);
  v["uncertainty.metric"] = to_string(e.metric);
  v["uncertainty.calibrate"] = e.calibrate ? "true" : "false";
  v["uncertainty.calibration_fraction"] = fmt_double(e.calibration_fraction);
  v["mc.passes"] = std::to_string(e.mc_passes);
  v["mc.drop_prob"] = fmt_double(e.mc_drop_prob);
  v["seeds.data"] = std::to_string(seeds.data);
  v["seeds.init"] = std::to_string(seeds.init);
  v["seeds.strategy"] = std::to_string(seeds.strategy);
  v["repeat"] = std::to_string(repeat);
  v["output.dir"] = output_dir;
  return v;
}

void RunConfig::validate() const {
  if (strategies.empty()) throw ConfigError("strategy: at least one strategy is required");
  if (repeat == 0) throw ConfigError("repeat: must be at least 1");
  if (dataset.kind == "blobs") {
    if (dataset.classes < 2 || dataset.per_class == 0 || dataset.dims == 0) {
      throw ConfigError("dataset: blobs need classes >= 2, per_class >= 1, dims >= 1");
    }
    if (!(dataset.spread > 0.0)) throw ConfigError("dataset.spread: must be positive");
  } else if (dataset.path.empty()) {
    throw ConfigError("dataset.path: required for dataset.kind = " + dataset.kind);
  } else if (dataset.kind == "idx" && dataset.labels_path.empty()) {
    throw ConfigError("dataset.labels_path: required for dataset.kind = idx");
  }
  if (!dataset.class_fractions.empty() && dataset.class_fractions.size() != dataset.classes) {
    throw ConfigError("dataset.class_fractions: need one fraction per class");
  }
  if (!(experiment.calibration_fraction > 0.0 && experiment.calibration_fraction < 1.0)) {
    throw ConfigError("uncertainty.calibration_fraction: must lie in (0,1)");
  }
  if (!(experiment.mc_drop_prob >= 0.0 && experiment.mc_drop_prob < 1.0)) {
    throw ConfigError("mc.drop_prob: must lie in [0,1)");
  }
  if (experiment.mc_passes == 0) throw ConfigError("mc.passes: must be at least 1");
  try {
    experiment.arch.validate();
    experiment.distill.validate();
    experiment.schedule.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

Dataset build_dataset(const DatasetSpec& spec) {
  auto norm_for = [&](Normalization fallback) {
    return spec.normalization == "auto" ? fallback : parse_normalization(spec.normalization);
  };
  Dataset data = [&] {
    if (spec.kind == "blobs") {
      Dataset d = make_blobs(spec.classes, spec.per_class, spec.dims, spec.spread, spec.seed);
      if (spec.normalization != "auto") {
        std::vector<std::size_t> all(d.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return Dataset(d.name(), normalize(d.features(), norm_for(Normalization::none)),
                       LabelOracle(d).labels(all), d.num_classes(), d.splits());
      }
      return d;
    }
    if (spec.kind == "csv") {
      return split_stratified(load_csv(spec.path, spec.classes, norm_for(Normalization::minmax)),
                              spec.test_fraction, spec.seed);
    }
    return split_stratified(
        load_idx(spec.path, spec.labels_path, norm_for(Normalization::byte_scale)),
        spec.test_fraction, spec.seed);
  }();
  if (!spec.class_fractions.empty()) {
    data = split_stratified(make_imbalanced(data, spec.class_fractions, spec.seed),
                            spec.test_fraction, spec.seed);
  }
  return data;
}

}  // namespace alkt
