/* hetnet C API. Regenerate with: cbindgen --config cbindgen.toml --crate hetnet-ffi --output include/hetnet.h */

#ifndef HETNET_H
#define HETNET_H

/* This file is generated by cbindgen from crates/hetnet-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code for every fallible call.
 */
enum hetnet_status {
  HETNET_OK = 0,
  HETNET_ERR_NULL_POINTER = 1,
  HETNET_ERR_INVALID_ARGUMENT = 2,
  HETNET_ERR_PARSE = 3,
  HETNET_ERR_INFEASIBLE = 4,
  HETNET_ERR_INTERNAL = 5,
};
#ifndef __cplusplus
typedef int32_t hetnet_status;
#endif // __cplusplus

/**
 * Opaque batch result of seeded trials.
 */
typedef struct hetnet_aggregate hetnet_aggregate;

/**
 * Opaque run configuration (scenario, seed, trials, solver settings).
 */
typedef struct hetnet_config hetnet_config;

/**
 * Opaque paired rate-floor sweep result.
 */
typedef struct hetnet_sweep hetnet_sweep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a configuration from a preset name (`"indoor"` or `"outdoor"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
hetnet_status hetnet_config_preset(const char *name, hetnet_config **out);

/**
 * Parses config text (same `key = value` format as the CLI).
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
hetnet_status hetnet_config_parse(const char *text, hetnet_config **out);

/**
 * Canonical serialization of a configuration. Free with
 * `hetnet_string_free`.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
char *hetnet_config_serialize(const hetnet_config *cfg);

/**
 * # Safety
 * `cfg` must be a live configuration handle.
 */
hetnet_status hetnet_config_set_seed(hetnet_config *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live configuration handle.
 */
hetnet_status hetnet_config_set_trials(hetnet_config *cfg, size_t trials);

/**
 * Sets the guaranteed macro sum rate on the shared band, nats/use.
 *
 * # Safety
 * `cfg` must be a live configuration handle.
 */
hetnet_status hetnet_config_set_min_macro_rate(hetnet_config *cfg, double nats_per_use);

/**
 * # Safety
 * `cfg` must come from a `hetnet_config_*` constructor (or be null).
 */
void hetnet_config_free(hetnet_config *cfg);

/**
 * Runs the configured number of seeded trials (both bands).
 *
 * Fails with `HETNET_ERR_INFEASIBLE` when the macro rate floor is
 * unreachable in every trial.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
hetnet_status hetnet_run_trials(const hetnet_config *cfg, hetnet_aggregate **out);

/**
 * Mean phantom sum rate on a band (1 or 2), nats/use.
 *
 * # Safety
 * `agg` must be a live aggregate handle.
 */
double hetnet_aggregate_mean_phantom_rate(const hetnet_aggregate *agg, int32_t band);

/**
 * 95% confidence half-width companion of the mean phantom rate.
 *
 * # Safety
 * `agg` must be a live aggregate handle.
 */
double hetnet_aggregate_ci_phantom_rate(const hetnet_aggregate *agg, int32_t band);

/**
 * Mean macro sum rate on the shared band, nats/use.
 *
 * # Safety
 * `agg` must be a live aggregate handle.
 */
double hetnet_aggregate_mean_macro_rate(const hetnet_aggregate *agg);

/**
 * # Safety
 * `agg` must be a live aggregate handle.
 */
size_t hetnet_aggregate_trials(const hetnet_aggregate *agg);

/**
 * # Safety
 * `agg` must be a live aggregate handle.
 */
size_t hetnet_aggregate_infeasible_trials(const hetnet_aggregate *agg);

/**
 * # Safety
 * `agg` must be a live aggregate handle.
 */
size_t hetnet_aggregate_unconverged_trials(const hetnet_aggregate *agg);

/**
 * Per-trial rates, nats/use. Any out-pointer may be null to skip it.
 *
 * # Safety
 * `agg` must be a live aggregate handle; non-null out-pointers must be
 * valid.
 */
hetnet_status hetnet_aggregate_trial_rates(const hetnet_aggregate *agg,
                                           size_t trial,
                                           double *macro_f1,
                                           double *phantom_f1,
                                           double *phantom_f2);

/**
 * # Safety
 * `agg` must come from `hetnet_run_trials` (or be null).
 */
void hetnet_aggregate_free(hetnet_aggregate *agg);

/**
 * Paired sweep of the macro rate floor using the configuration's sweep
 * section (point count and grid top).
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
hetnet_status hetnet_sweep_rmin(const hetnet_config *cfg, hetnet_sweep **out);

/**
 * # Safety
 * `sweep` must be a live sweep handle.
 */
size_t hetnet_sweep_len(const hetnet_sweep *sweep);

/**
 * Reads one sweep point. Any out-pointer may be null to skip that field.
 * `infeasible` receives how many of the point's trials failed the
 * feasibility gate.
 *
 * # Safety
 * `sweep` must be a live sweep handle; non-null out-pointers must be valid.
 */
hetnet_status hetnet_sweep_point(const hetnet_sweep *sweep,
                                 size_t index,
                                 double *r_min,
                                 double *mean_phantom_f1,
                                 double *mean_phantom_f2,
                                 double *mean_phantom_total,
                                 size_t *infeasible);

/**
 * Trials per sweep point.
 *
 * # Safety
 * `sweep` must be a live sweep handle.
 */
size_t hetnet_sweep_trials(const hetnet_sweep *sweep);

/**
 * # Safety
 * `sweep` must come from `hetnet_sweep_rmin` (or be null).
 */
void hetnet_sweep_free(hetnet_sweep *sweep);

/**
 * Static message for a status code.
 */
const char *hetnet_status_message(hetnet_status status);

/**
 * Library version as a static string.
 */
const char *hetnet_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from a `hetnet_*` function that documents this free (or be
 * null), and must not be freed twice.
 */
void hetnet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif // __cplusplus

#endif  /* HETNET_H */
