#ifndef VANET_TRUST_H
#define VANET_TRUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VtStatus {
  VT_STATUS_OK = 0,
  VT_STATUS_NULL_POINTER = 1,
  VT_STATUS_INVALID_UTF8 = 2,
  VT_STATUS_INVALID_CONFIG = 3,
  VT_STATUS_SIMULATION = 4,
  VT_STATUS_IO = 5,
  VT_STATUS_OUT_OF_RANGE = 6,
  VT_STATUS_PANIC = 7,
} VtStatus;

typedef enum VtPolicy {
  VT_POLICY_TCEMD = 0,
  VT_POLICY_SAFE = 1,
} VtPolicy;

// Opaque scenario configuration.
typedef struct VtConfig VtConfig;

// Opaque completed run: its log and derived results.
typedef struct VtRun VtRun;

// Metrics of one global-trust period.
typedef struct VtPeriod {
  uint32_t period_index;
  double t;
  uint64_t fbr_count;
  double positive_rate;
  double negative_rate;
  uint64_t ugt_count;
  double blr;
  double n_blr;
  double decision_accuracy;
} VtPeriod;

typedef struct VtTotals {
  uint64_t vehicles;
  uint64_t messages;
  uint64_t deliveries;
  uint64_t decisions;
  uint64_t reports;
  uint64_t reports_accepted;
  uint64_t reports_rejected;
  uint64_t blacklisted;
} VtTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL after a success.
// Valid until the next call into this library from the same thread.
const char *vt_last_error(void);

// Static, NUL-terminated library version.
const char *vt_version(void);

// Creates a configuration from a preset name (`single_event`, `multi_event`).
//
// # Safety
// `name` must be a NUL-terminated string; `out_config` must be writable.
enum VtStatus vt_config_preset(const char *name, struct VtConfig **out_config);

// Parses and validates a TOML scenario document.
//
// # Safety
// `toml` must be a NUL-terminated string; `out_config` must be writable.
enum VtStatus vt_config_from_toml(const char *toml, struct VtConfig **out_config);

// Sets one parameter from a TOML literal, e.g. `("d_d", "200")`. Event keys
// apply to every event. The configuration is unchanged on failure.
//
// # Safety
// `config` must come from this library; `key` and `value` must be NUL-terminated.
enum VtStatus vt_config_set(struct VtConfig *config, const char *key, const char *value);

// # Safety
// `config` must come from this library.
enum VtStatus vt_config_set_policy(struct VtConfig *config, enum VtPolicy policy);

// Resolved configuration as a TOML string; release it with [`vt_string_free`].
//
// # Safety
// `config` must come from this library; `out_toml` must be writable.
enum VtStatus vt_config_to_toml(const struct VtConfig *config, char **out_toml);

// # Safety
// `config` must be NULL or come from this library, and is invalid afterwards.
void vt_config_free(struct VtConfig *config);

// # Safety
// `s` must be NULL or a string returned by this library.
void vt_string_free(char *s);

// Runs the simulation to completion.
//
// # Safety
// `config` must come from this library; `out_run` must be writable.
enum VtStatus vt_run(const struct VtConfig *config, uint64_t seed, struct VtRun **out_run);

// # Safety
// `run` must be NULL or come from this library, and is invalid afterwards.
void vt_run_free(struct VtRun *run);

// # Safety
// `run` must come from this library; `out_count` must be writable.
enum VtStatus vt_run_period_count(const struct VtRun *run, size_t *out_count);

// # Safety
// `run` must come from this library; `out_period` must be writable.
enum VtStatus vt_run_period(const struct VtRun *run, size_t index, struct VtPeriod *out_period);

// # Safety
// `run` must come from this library; `out_totals` must be writable.
enum VtStatus vt_run_totals(const struct VtRun *run, struct VtTotals *out_totals);

// Final trust of a node; `out_blacklisted` may be NULL.
//
// # Safety
// `run` must come from this library; `out_gt` must be writable.
enum VtStatus vt_run_trust(const struct VtRun *run,
                           uint32_t node,
                           double *out_gt,
                           bool *out_blacklisted);

// Replays the run log through the oracle and stores the divergence count.
//
// # Safety
// `run` must come from this library; `out_divergences` must be writable.
enum VtStatus vt_run_verify(const struct VtRun *run, size_t *out_divergences);

// Writes the run log, metric CSVs and config echo into `dir`.
//
// # Safety
// `run` must come from this library; `dir` must be NUL-terminated.
enum VtStatus vt_run_write(const struct VtRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANET_TRUST_H */
