// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat `key = value` file with `[section]` headers that
// prefix the keys below them (`[model]` + `kind = mlp` is `model.kind`).

#ifndef ALKT_CONFIG_HPP
#define ALKT_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "alkt/datasets.hpp"
#include "alkt/experiment.hpp"
#include "alkt/selection.hpp"

namespace alkt {

/// Any malformed, unknown or out-of-range configuration entry.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

/// Parse the text format. `source` only labels error messages.
KeyValues parse_config_text(std::string_view text, const std::string& source = "<config>");

/// Text file, or a `.json` file (a manifest's `config` object, or any object
/// whose nested keys are flattened with dots).
KeyValues load_config_file(const std::filesystem::path& path);

struct DatasetSpec {
  std::string kind = "blobs";
  std::size_t classes = 4;
  std::size_t per_class = 500;
  std::size_t dims = 2;
  double spread = 0.45;
  std::uint64_t seed = 0;
  std::string path;
  std::string labels_path;
  /// "auto": byte for idx, minmax for csv, none for blobs.
  std::string normalization = "auto";
  double test_fraction = 0.2;
  /// Optional per-class keep fractions.
  std::vector<double> class_fractions;
};

struct RunConfig {
  DatasetSpec dataset;
  std::vector<StrategyKind> strategies{StrategyKind::proposed};
  ExperimentConfig experiment;
  Seeds seeds;
  std::size_t repeat = 1;
  std::string output_dir = "out";

  /// Every key documented in docs/config.md; unknown keys throw.
  static RunConfig from_values(const KeyValues& values);
  KeyValues to_values() const;
  void validate() const;
};

/// Every recognized key with its default.
KeyValues default_values();

Dataset build_dataset(const DatasetSpec& spec);

}  // namespace alkt

#endif  // ALKT_CONFIG_HPP
