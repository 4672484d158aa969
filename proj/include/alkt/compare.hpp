// SPDX-License-Identifier: Apache-2.0
//
// Aggregation of finished run directories into mean and stddev per
// (strategy, budget point).

#ifndef ALKT_COMPARE_HPP
#define ALKT_COMPARE_HPP

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace alkt {

class CompareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunCurve {
  std::filesystem::path dir;
  std::string strategy;
  std::vector<double> budgets;
  std::vector<double> test_accuracy;
  std::vector<double> gap_pp;
};

/// Reads manifest.json (strategy) and records.csv from one run directory.
RunCurve read_run(const std::filesystem::path& dir);

/// Every directory at or below the roots holding records.csv, sorted by path.
std::vector<RunCurve> find_runs(std::span<const std::filesystem::path> roots);

struct CompareRow {
  std::string strategy;
  std::size_t cycle = 0;
  double budget_fraction = 0.0;
  std::size_t runs = 0;
  double mean_test_accuracy = 0.0;
  /// Sample standard deviation; 0 for a single run.
  double std_test_accuracy = 0.0;
  double mean_gap_pp = 0.0;
  double std_gap_pp = 0.0;
};

/// Throws CompareError when there are no runs or the budget schedules differ;
/// the message lists every misaligned run.
std::vector<CompareRow> aggregate_runs(std::span<const RunCurve> runs);

void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows);

double mean_of(std::span<const double> v);
double sample_stddev(std::span<const double> v);

}  // namespace alkt

#endif  // ALKT_COMPARE_HPP
