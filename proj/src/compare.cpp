// SPDX-License-Identifier: Apache-2.0

#include "alkt/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace alkt {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::filesystem::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw CompareError(file.string() + ":" + std::to_string(line) + ": bad number '" + cell + "'");
}

bool same_schedule(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-12) return false;
  }
  return true;
}

std::string schedule_str(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

}  // namespace

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

RunCurve read_run(const std::filesystem::path& dir) {
  RunCurve run;
  run.dir = dir;
  const auto manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw CompareError("missing " + manifest_path.string());
  try {
    const auto j = nlohmann::json::parse(mf);
    run.strategy = j.at("strategy").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CompareError(manifest_path.string() + ": " + e.what());
  }

  const auto records_path = dir / "records.csv";
  std::ifstream rf(records_path);
  if (!rf) throw CompareError("missing " + records_path.string());
  std::string line;
  std::getline(rf, line);
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CompareError(records_path.string() + ": no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_budget = col("budget_fraction");
  const std::size_t c_test = col("test_accuracy");
  const std::size_t c_gap = col("gap_pp");
  std::size_t line_no = 1;
  while (std::getline(rf, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw CompareError(records_path.string() + ":" + std::to_string(line_no) +
                         ": expected " + std::to_string(header.size()) + " cells");
    }
    run.budgets.push_back(parse_cell(cells[c_budget], records_path, line_no));
    run.test_accuracy.push_back(parse_cell(cells[c_test], records_path, line_no));
    run.gap_pp.push_back(parse_cell(cells[c_gap], records_path, line_no));
  }
  if (run.budgets.empty()) throw CompareError(records_path.string() + ": no records");
  return run;
}

std::vector<RunCurve> find_runs(std::span<const std::filesystem::path> roots) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& root : roots) {
    if (!std::filesystem::is_directory(root)) {
      throw CompareError("not a directory: " + root.string());
    }
    if (std::filesystem::exists(root / "records.csv")) dirs.push_back(root);
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "records.csv")) {
        dirs.push_back(entry.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
  std::vector<RunCurve> runs;
  for (const auto& d : dirs) runs.push_back(read_run(d));
  return runs;
}

std::vector<CompareRow> aggregate_runs(std::span<const RunCurve> runs) {
  if (runs.empty()) throw CompareError("no run directories found");
  const auto& ref = runs.front();
  std::string misaligned;
  for (const auto& r : runs) {
    if (!same_schedule(r.budgets, ref.budgets)) {
      misaligned += "\n  " + r.dir.string() + ": [" + schedule_str(r.budgets) + "] vs [" +
                    schedule_str(ref.budgets) + "] in " + ref.dir.string();
    }
  }
  if (!misaligned.empty()) throw CompareError("budget schedules differ:" + misaligned);

  std::map<std::string, std::vector<const RunCurve*>> by_strategy;
  for (const auto& r : runs) by_strategy[r.strategy].push_back(&r);
  std::vector<CompareRow> rows;
  for (const auto& [strategy, group] : by_strategy) {
    for (std::size_t c = 0; c < ref.budgets.size(); ++c) {
      std::vector<double> acc, gap;
      for (const auto* r : group) {
        acc.push_back(r->test_accuracy[c]);
        gap.push_back(r->gap_pp[c]);
      }
      rows.push_back({strategy, c, ref.budgets[c], group.size(), mean_of(acc),
                      sample_stddev(acc), mean_of(gap), sample_stddev(gap)});
    }
  }
  return rows;
}

void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows) {
  out << "strategy,cycle,budget_fraction,runs,mean_test_accuracy,std_test_accuracy,"
         "mean_gap_pp,std_gap_pp\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.cycle << ',' << r.budget_fraction << ',' << r.runs << ','
        << r.mean_test_accuracy << ',' << r.std_test_accuracy << ',' << r.mean_gap_pp << ','
        << r.std_gap_pp << '\n';
  }
}

}  // namespace alkt
