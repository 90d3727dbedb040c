#ifndef BOUNDARY_PROBE_H
#define BOUNDARY_PROBE_H

/* Generated by cbindgen from boundary-probe-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible FFI call.
 */
typedef enum BpStatus {
  BP_STATUS_OK = 0,
  BP_STATUS_NULL_POINTER = 1,
  BP_STATUS_INVALID_ARGUMENT = 2,
  BP_STATUS_IO_ERROR = 3,
  BP_STATUS_RUNTIME_ERROR = 4,
} BpStatus;

/**
 * Opaque pipeline configuration handle.
 */
typedef struct BpConfig BpConfig;

/**
 * Opaque validation-report handle.
 */
typedef struct BpReport BpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the most recent failed call on this thread, or NULL.
 * The caller owns the returned string (release with `bp_string_free`).
 */
char *bp_last_error(void);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must have been returned by a `bp_*` function and not freed before.
 */
void bp_string_free(char *s);

/**
 * Newline-separated names of the built-in systems.
 */
char *bp_list_systems(void);

/**
 * A configuration with the reference defaults. Never fails.
 */
struct BpConfig *bp_config_new(void);

/**
 * Loads a configuration from a TOML file into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum BpStatus bp_config_from_file(const char *path, struct BpConfig **out);

/**
 * Sets one configuration key. `value` is parsed as a TOML literal
 * (numbers, booleans, arrays); anything unparseable is taken as a string,
 * so `bp_config_set(cfg, "system", "system_2_combined")` works unquoted.
 *
 * # Safety
 * All pointers must be valid; `cfg` must come from `bp_config_new` or
 * `bp_config_from_file`.
 */
enum BpStatus bp_config_set(struct BpConfig *cfg, const char *key, const char *value);

/**
 * The effective configuration rendered as TOML.
 *
 * # Safety
 * `cfg` must be a valid configuration handle.
 */
char *bp_config_to_toml(const struct BpConfig *cfg);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice. NULL is a no-op.
 */
void bp_config_free(struct BpConfig *cfg);

/**
 * Trains the explorer and writes the checkpoint and metrics log.
 *
 * # Safety
 * `cfg` must be a valid configuration handle.
 */
enum BpStatus bp_train(const struct BpConfig *cfg);

/**
 * Collects counterfactuals and writes trajectories, rules, and cluster
 * plot data. Requires a prior `bp_train` with the same configuration.
 *
 * # Safety
 * `cfg` must be a valid configuration handle.
 */
enum BpStatus bp_analyze(const struct BpConfig *cfg);

/**
 * Validates the collected artifacts and stores a report handle in `*out`.
 * Whether validation passed is data on the report, not a status code.
 *
 * # Safety
 * `cfg` must be a valid configuration handle and `out` a valid pointer.
 */
enum BpStatus bp_report(const struct BpConfig *cfg, struct BpReport **out);

/**
 * Full pipeline: train, analyze, report.
 *
 * # Safety
 * `cfg` must be a valid configuration handle and `out` a valid pointer.
 */
enum BpStatus bp_run(const struct BpConfig *cfg, struct BpReport **out);

/**
 * 1 when every ground-truth check passed (or none applied), else 0.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
int32_t bp_report_passed(const struct BpReport *report);

/**
 * Number of counterfactual records behind the report.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
uint64_t bp_report_counterfactual_count(const struct BpReport *report);

/**
 * Human-readable report text, identical to the `report` subcommand's.
 *
 * # Safety
 * `report` must be a valid report handle.
 */
char *bp_report_render(const struct BpReport *report);

/**
 * # Safety
 * `report` must come from this library and not be freed twice. NULL is a
 * no-op.
 */
void bp_report_free(struct BpReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOUNDARY_PROBE_H */
