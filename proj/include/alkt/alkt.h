/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the active-learning library. Every call returns an
 * alkt_status; on failure alkt_last_error() describes the most recent error
 * on the calling thread. Handles are opaque and owned by the caller.
 */

#ifndef ALKT_ALKT_H
#define ALKT_ALKT_H

#include <stddef.h>

#if defined(_WIN32)
#define ALKT_API __declspec(dllexport)
#else
#define ALKT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum alkt_status {
  ALKT_OK = 0,
  ALKT_E_INVALID_ARGUMENT = 1,
  ALKT_E_CONFIG = 2,
  ALKT_E_IO = 3,
  ALKT_E_RUNTIME = 4,
  ALKT_E_CHECK_FAILED = 5,
  ALKT_E_BUFFER_TOO_SMALL = 6
} alkt_status;

typedef struct alkt_config alkt_config;

ALKT_API const char* alkt_version(void);
ALKT_API const char* alkt_git_describe(void);
ALKT_API const char* alkt_status_string(alkt_status status);
/* Message of the last failed call on this thread; "" if none. */
ALKT_API const char* alkt_last_error(void);

/* Configuration: starts from built-in defaults. */
ALKT_API alkt_status alkt_config_create(alkt_config** out);
ALKT_API void alkt_config_destroy(alkt_config* config);
/* Merge a config file (key-value text or JSON manifest) into `config`. */
ALKT_API alkt_status alkt_config_load(alkt_config* config, const char* path);
/* Set one dotted key. Unknown keys fail with ALKT_E_CONFIG. */
ALKT_API alkt_status alkt_config_set(alkt_config* config, const char* key, const char* value);
/* Copy the effective value of `key` into buf (NUL-terminated). `*length`
 * receives the value length without the terminator. */
ALKT_API alkt_status alkt_config_get(const alkt_config* config, const char* key, char* buf,
                                     size_t capacity, size_t* length);
ALKT_API alkt_status alkt_config_validate(const alkt_config* config);

typedef struct alkt_run_summary {
  const char* strategy;
  size_t repeat_index;
  const char* run_dir;
  size_t cycles;
  double final_budget_fraction;
  double final_test_accuracy;
  double final_gap_pp;
} alkt_run_summary;

typedef void (*alkt_run_callback)(const alkt_run_summary* summary, void* user);

/* Run every strategy x repeat into <output.dir>/<strategy>/run_<i>/. Repeat i
 * uses seeds (data + i, init + i, strategy + i). Worker threads come from the
 * ALKT_THREADS environment variable (default 1). */
ALKT_API alkt_status alkt_run(const alkt_config* config, alkt_run_callback callback, void* user);

/* Aggregate every run directory found under `dirs` into `out_csv`. Fails with
 * ALKT_E_INVALID_ARGUMENT when no run is found or the schedules differ. */
ALKT_API alkt_status alkt_compare(const char* const* dirs, size_t count, const char* out_csv);

typedef void (*alkt_check_callback)(const char* name, int passed, const char* detail,
                                    void* user);

/* Run the invariant suite. `mutation` is NULL or "kl-eps" (corrupts the KL
 * floor so the oracle checks must fail). Returns ALKT_E_CHECK_FAILED when any
 * check fails; `*failed` receives the count. */
ALKT_API alkt_status alkt_selftest(const char* mutation, alkt_check_callback callback,
                                   void* user, size_t* failed);

/* KL(p || q) with the standard floor. */
ALKT_API alkt_status alkt_kl_divergence(const double* p, const double* q, size_t n,
                                        double* out);
/* L2 distance between the normalized maps. */
ALKT_API alkt_status alkt_attention_distance(const double* student_map,
                                             const double* teacher_map, size_t n,
                                             double* out);

#ifdef __cplusplus
}
#endif

#endif /* ALKT_ALKT_H */
