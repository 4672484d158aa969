// SPDX-License-Identifier: Apache-2.0
//
// alkt: command-line front end over the C API.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alkt/alkt.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(alkt_status status) {
  switch (status) {
    case ALKT_OK: return kExitOk;
    case ALKT_E_INVALID_ARGUMENT:
    case ALKT_E_CONFIG: return kExitUsage;
    default: return kExitRuntime;
  }
}

int report(alkt_status status) {
  if (status != ALKT_OK) {
    std::cerr << "alkt: " << alkt_status_string(status) << ": " << alkt_last_error() << '\n';
  }
  return exit_code_for(status);
}

struct RunOptions {
  std::string config;
  std::string strategy;
  std::string seed;
  std::string repeat;
  std::string out;
};

// Turns leftover `--key value` / `--key=value` tokens into override pairs.
bool parse_overrides(const std::vector<std::string>& extras,
                     std::vector<std::pair<std::string, std::string>>& out) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) {
      std::cerr << "alkt: unexpected argument '" << tok << "'\n";
      return false;
    }
    const std::string body = tok.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      std::cerr << "alkt: override '" << tok << "' needs a value\n";
      return false;
    }
  }
  return true;
}

void print_summary(const alkt_run_summary* s, void*) {
  std::printf("%-20s %6zu %7zu %10.4f %10.4f %9.2f  %s\n", s->strategy, s->repeat_index,
              s->cycles, s->final_budget_fraction, s->final_test_accuracy, s->final_gap_pp,
              s->run_dir);
  std::fflush(stdout);
}

int cmd_run(const RunOptions& opt, const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (!parse_overrides(extras, overrides)) return kExitUsage;
  if (!opt.strategy.empty()) overrides.emplace_back("strategy", opt.strategy);
  if (!opt.seed.empty()) overrides.emplace_back("seed", opt.seed);
  if (!opt.repeat.empty()) overrides.emplace_back("repeat", opt.repeat);
  if (!opt.out.empty()) overrides.emplace_back("output.dir", opt.out);

  alkt_config* cfg = nullptr;
  alkt_status st = alkt_config_create(&cfg);
  if (st == ALKT_OK) st = alkt_config_load(cfg, opt.config.c_str());
  for (const auto& [k, v] : overrides) {
    if (st != ALKT_OK) break;
    st = alkt_config_set(cfg, k.c_str(), v.c_str());
  }
  if (st == ALKT_OK) st = alkt_config_validate(cfg);
  if (st == ALKT_OK) {
    std::printf("%-20s %6s %7s %10s %10s %9s  %s\n", "strategy", "repeat", "cycles", "budget",
                "test_acc", "gap_pp", "run_dir");
    st = alkt_run(cfg, print_summary, nullptr);
  }
  alkt_config_destroy(cfg);
  return report(st);
}

int cmd_compare(const std::vector<std::string>& dirs, std::string out) {
  if (out.empty()) out = (dirs.empty() ? std::string(".") : dirs.front()) + "/compare.csv";
  std::vector<const char*> raw;
  for (const auto& d : dirs) raw.push_back(d.c_str());
  const alkt_status st = alkt_compare(raw.data(), raw.size(), out.c_str());
  if (st == ALKT_OK) std::printf("wrote %s\n", out.c_str());
  return report(st);
}

void print_check(const char* name, int passed, const char* detail, void*) {
  std::printf("%s %-28s %s\n", passed ? "PASS" : "FAIL", name, detail);
  std::fflush(stdout);
}

int cmd_selftest(const std::string& mutation) {
  size_t failed = 0;
  const alkt_status st =
      alkt_selftest(mutation.empty() ? nullptr : mutation.c_str(), print_check, nullptr, &failed);
  if (st == ALKT_OK) {
    std::printf("selftest: all checks passed\n");
    return kExitOk;
  }
  if (st == ALKT_E_CHECK_FAILED) {
    std::printf("selftest: %zu check(s) failed\n", failed);
    return kExitRuntime;
  }
  return report(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning with teacher-student disagreement scoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(alkt_version()) + " (" + alkt_git_describe() + ")");

  RunOptions run_opt;
  auto* run = app.add_subcommand(
      "run",
      "Run every configured strategy x repeat and write artifacts.\n"
      "Any config key may be overridden with --<key> <value>, e.g. --dataset.spread 0.4.");
  run->add_option("--config", run_opt.config, "Config file (key-value text or .json manifest)")
      ->required();
  run->add_option("--strategy", run_opt.strategy,
                  "Strategy name, comma list, or 'all' (overrides `strategy`)");
  run->add_option("--seed", run_opt.seed, "Base seed for data, init and strategy streams");
  run->add_option("--repeat", run_opt.repeat, "Repeats; repeat i uses seed + i");
  run->add_option("--out", run_opt.out, "Output directory (overrides `output.dir`)");
  run->allow_extras();

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand(
      "compare", "Aggregate run directories into compare.csv (mean and stddev per budget)");
  compare->add_option("dirs", compare_dirs, "Run directories or parents of run directories")
      ->required();
  compare->add_option("--out", compare_out, "Output CSV (default <first dir>/compare.csv)");

  std::string mutation;
  auto* selftest = app.add_subcommand("selftest", "Run the fast invariant suite");
  selftest->add_option("--mutate", mutation,
                       "Deliberately corrupt a constant to prove the checks can fail (kl-eps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*run) return cmd_run(run_opt, run->remaining());
  if (*compare) return cmd_compare(compare_dirs, compare_out);
  if (*selftest) return cmd_selftest(mutation);
  return kExitUsage;
}
