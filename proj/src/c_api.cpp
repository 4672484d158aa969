// SPDX-License-Identifier: Apache-2.0

#include "alkt/alkt.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "alkt/compare.hpp"
#include "alkt/config.hpp"
#include "alkt/distill.hpp"
#include "alkt/experiment.hpp"
#include "alkt/selftest.hpp"
#include "alkt/uncertainty.hpp"

struct alkt_config {
  alkt::KeyValues values;
};

namespace {

thread_local std::string g_last_error;

alkt_status fail(alkt_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, mapping exceptions onto status codes.
template <typename F>
alkt_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const alkt::ConfigError& e) {
    return fail(ALKT_E_CONFIG, e.what());
  } catch (const alkt::CompareError& e) {
    return fail(ALKT_E_INVALID_ARGUMENT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ALKT_E_IO, e.what());
  } catch (const std::exception& e) {
    return fail(ALKT_E_RUNTIME, e.what());
  } catch (...) {
    return fail(ALKT_E_RUNTIME, "unknown error");
  }
}

std::size_t env_threads() {
  const char* s = std::getenv("ALKT_THREADS");
  if (!s || !*s) return 1;
  char* end = nullptr;
  const long v = std::strtol(s, &end, 10);
  if (*end != '\0' || v < 1) {
    throw alkt::ConfigError(std::string("ALKT_THREADS: expected a positive integer, got '") +
                            s + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

extern "C" {

const char* alkt_version(void) {
  static const std::string v = alkt::library_version();
  return v.c_str();
}

const char* alkt_git_describe(void) {
  static const std::string v = alkt::git_describe();
  return v.c_str();
}

const char* alkt_status_string(alkt_status status) {
  switch (status) {
    case ALKT_OK: return "ok";
    case ALKT_E_INVALID_ARGUMENT: return "invalid argument";
    case ALKT_E_CONFIG: return "configuration error";
    case ALKT_E_IO: return "i/o error";
    case ALKT_E_RUNTIME: return "runtime error";
    case ALKT_E_CHECK_FAILED: return "check failed";
    case ALKT_E_BUFFER_TOO_SMALL: return "buffer too small";
  }
  return "unknown status";
}

const char* alkt_last_error(void) { return g_last_error.c_str(); }

alkt_status alkt_config_create(alkt_config** out) {
  if (!out) return fail(ALKT_E_INVALID_ARGUMENT, "alkt_config_create: null output");
  return guarded([&] {
    *out = new alkt_config{};
    return ALKT_OK;
  });
}

void alkt_config_destroy(alkt_config* config) { delete config; }

alkt_status alkt_config_load(alkt_config* config, const char* path) {
  if (!config || !path) return fail(ALKT_E_INVALID_ARGUMENT, "alkt_config_load: null argument");
  return guarded([&] {
    auto loaded = alkt::load_config_file(path);
    alkt::KeyValues merged = config->values;
    for (auto& [k, v] : loaded) merged[k] = v;
    alkt::RunConfig::from_values(merged);
    config->values = std::move(merged);
    return ALKT_OK;
  });
}

alkt_status alkt_config_set(alkt_config* config, const char* key, const char* value) {
  if (!config || !key || !value) {
    return fail(ALKT_E_INVALID_ARGUMENT, "alkt_config_set: null argument");
  }
  return guarded([&] {
    const std::string k(key);
    if (k != "seed" && !alkt::default_values().count(k)) {
      throw alkt::ConfigError("unknown config key '" + k + "'");
    }
    if (k == "seed") {
      // A base seed replaces any per-stream seeds set earlier.
      for (const char* s : {"seeds.data", "seeds.init", "seeds.strategy"}) config->values.erase(s);
    }
    config->values[k] = value;
    return ALKT_OK;
  });
}

alkt_status alkt_config_get(const alkt_config* config, const char* key, char* buf,
                            size_t capacity, size_t* length) {
  if (!config || !key) return fail(ALKT_E_INVALID_ARGUMENT, "alkt_config_get: null argument");
  return guarded([&] {
    const auto values = alkt::RunConfig::from_values(config->values).to_values();
    const auto it = values.find(key);
    if (it == values.end()) throw alkt::ConfigError(std::string("unknown config key '") + key + "'");
    if (length) *length = it->second.size();
    if (!buf || capacity <= it->second.size()) {
      return fail(ALKT_E_BUFFER_TOO_SMALL, "alkt_config_get: buffer too small");
    }
    std::memcpy(buf, it->second.c_str(), it->second.size() + 1);
    return ALKT_OK;
  });
}

alkt_status alkt_config_validate(const alkt_config* config) {
  if (!config) return fail(ALKT_E_INVALID_ARGUMENT, "alkt_config_validate: null config");
  return guarded([&] {
    alkt::RunConfig::from_values(config->values);
    return ALKT_OK;
  });
}

alkt_status alkt_run(const alkt_config* config, alkt_run_callback callback, void* user) {
  if (!config) return fail(ALKT_E_INVALID_ARGUMENT, "alkt_run: null config");
  return guarded([&] {
    const alkt::RunConfig rc = alkt::RunConfig::from_values(config->values);
    const std::size_t threads = env_threads();
    alkt::Dataset data = [&] {
      try {
        return alkt::build_dataset(rc.dataset);
      } catch (const std::invalid_argument& e) {
        throw alkt::ConfigError(std::string("dataset: ") + e.what());
      }
    }();
    alkt::ExperimentConfig ecfg = rc.experiment;
    ecfg.threads = threads;
    try {
      alkt::bind_arch(ecfg.arch, data);
      alkt::check_schedule_feasible(ecfg.schedule, data.indices(alkt::SplitTag::train_pool).size());
    } catch (const std::exception& e) {
      throw alkt::ConfigError(e.what());
    }

    for (const auto strategy : rc.strategies) {
      for (std::size_t i = 0; i < rc.repeat; ++i) {
        alkt::RunConfig single = rc;
        single.strategies = {strategy};
        single.seeds = rc.seeds.offset(i);
        single.repeat = 1;
        const std::filesystem::path dir = std::filesystem::path(rc.output_dir) /
                                          alkt::to_string(strategy) /
                                          ("run_" + std::to_string(i));
        nlohmann::json extra;
        extra["config"] = single.to_values();
        extra["repeat_index"] = i;
        extra["threads"] = threads;
        const auto run = alkt::run_experiment(data, strategy, ecfg, single.seeds, dir, extra);
        if (callback) {
          const auto& last = run.records.back();
          const std::string name = alkt::to_string(strategy);
          const std::string dir_str = dir.string();
          alkt_run_summary s{name.c_str(),        i,
                             dir_str.c_str(),     run.records.size(),
                             last.budget_fraction, last.test_accuracy,
                             last.gap_pp};
          callback(&s, user);
        }
      }
    }
    return ALKT_OK;
  });
}

alkt_status alkt_compare(const char* const* dirs, size_t count, const char* out_csv) {
  if ((!dirs && count) || !out_csv) {
    return fail(ALKT_E_INVALID_ARGUMENT, "alkt_compare: null argument");
  }
  return guarded([&] {
    std::vector<std::filesystem::path> roots;
    for (size_t i = 0; i < count; ++i) roots.emplace_back(dirs[i]);
    const auto runs = alkt::find_runs(roots);
    const auto rows = alkt::aggregate_runs(runs);
    std::ofstream out(out_csv);
    if (!out) return fail(ALKT_E_IO, std::string("cannot write ") + out_csv);
    alkt::write_compare_csv(out, rows);
    return out ? ALKT_OK : fail(ALKT_E_IO, std::string("short write on ") + out_csv);
  });
}

alkt_status alkt_selftest(const char* mutation, alkt_check_callback callback, void* user,
                          size_t* failed) {
  return guarded([&] {
    alkt::SelftestOptions opts;
    if (mutation && *mutation) {
      if (std::strcmp(mutation, "kl-eps") != 0) {
        return fail(ALKT_E_INVALID_ARGUMENT,
                    std::string("unknown selftest mutation '") + mutation + "'");
      }
      opts.kl_eps = 0.25;
    }
    std::size_t bad = 0;
    for (const auto& check : alkt::run_selftest(opts)) {
      if (!check.passed) ++bad;
      if (callback) callback(check.name.c_str(), check.passed ? 1 : 0, check.detail.c_str(), user);
    }
    if (failed) *failed = bad;
    return bad ? fail(ALKT_E_CHECK_FAILED, std::to_string(bad) + " selftest check(s) failed")
               : ALKT_OK;
  });
}

alkt_status alkt_kl_divergence(const double* p, const double* q, size_t n, double* out) {
  if (!p || !q || !out || n == 0) {
    return fail(ALKT_E_INVALID_ARGUMENT, "alkt_kl_divergence: null or empty input");
  }
  return guarded([&] {
    *out = alkt::kl_divergence({p, n}, {q, n});
    return ALKT_OK;
  });
}

alkt_status alkt_attention_distance(const double* student_map, const double* teacher_map,
                                    size_t n, double* out) {
  if (!student_map || !teacher_map || !out || n == 0) {
    return fail(ALKT_E_INVALID_ARGUMENT, "alkt_attention_distance: null or empty input");
  }
  return guarded([&] {
    *out = alkt::attention_distance({student_map, n}, {teacher_map, n});
    return ALKT_OK;
  });
}

}  // extern "C"
