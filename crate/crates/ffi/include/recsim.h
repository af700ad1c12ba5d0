#ifndef RECSIM_H
#define RECSIM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RecsimStatus {
  RECSIM_STATUS_OK = 0,
  RECSIM_STATUS_NULL_POINTER = 1,
  RECSIM_STATUS_INVALID_UTF8 = 2,
  RECSIM_STATUS_INVALID_CONFIG = 3,
  RECSIM_STATUS_INVALID_ARGUMENT = 4,
  RECSIM_STATUS_SIMULATION_FAILED = 5,
  RECSIM_STATUS_IO = 6,
  RECSIM_STATUS_OUTPUT_EXISTS = 7,
  RECSIM_STATUS_OUT_OF_RANGE = 8,
  RECSIM_STATUS_PANIC = 9,
} RecsimStatus;

/**
 * Opaque experiment configuration.
 */
typedef struct RecsimConfig RecsimConfig;

/**
 * Opaque results of a finished experiment.
 */
typedef struct RecsimResults RecsimResults;

/**
 * Per-run metrics. Undefined ratios are NaN.
 */
typedef struct RecsimMetrics {
  /**
   * Position of the algorithm in `recsim_algorithm_name` order.
   */
  uint32_t algorithm;
  uint64_t run_id;
  double inter;
  double intra;
  double filter_bubble;
  double homogeneity;
  double alt_homogeneity;
  double natural_homogeneity;
  double mean_q;
  double mean_aff;
  double std_q;
  double std_aff;
} RecsimMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next call that fails.
 */
const char *recsim_last_error_message(void);

/**
 * Static, NUL-terminated library version.
 */
const char *recsim_version(void);

size_t recsim_algorithm_count(void);

/**
 * Static name of algorithm `index`, or null when out of range.
 */
const char *recsim_algorithm_name(size_t index);

/**
 * Full-scale default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum RecsimStatus recsim_config_default(struct RecsimConfig **out);

/**
 * Small desk-scale configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum RecsimStatus recsim_config_desk(struct RecsimConfig **out);

/**
 * Parses a TOML document; missing keys take the defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid writable storage.
 */
enum RecsimStatus recsim_config_from_toml(const char *toml, struct RecsimConfig **out);

/**
 * Overrides the number of seeds per algorithm.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RecsimStatus recsim_config_set_runs(struct RecsimConfig *config, size_t runs);

/**
 * Overrides the master seed.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum RecsimStatus recsim_config_set_seed(struct RecsimConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void recsim_config_free(struct RecsimConfig *config);

/**
 * Runs every algorithm in the comma-separated `algorithms` list
 * (null or "all" selects all nine) over the configured seeds.
 *
 * # Safety
 * `config` must be a live handle, `algorithms` null or NUL-terminated,
 * and `out` valid writable storage.
 */
enum RecsimStatus recsim_run(const struct RecsimConfig *config,
                             const char *algorithms,
                             struct RecsimResults **out);

/**
 * Number of (algorithm, seed) runs held.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
size_t recsim_results_len(const struct RecsimResults *results);

/**
 * Metrics of run `index`, ordered by algorithm then seed.
 *
 * # Safety
 * `results` must be a live handle and `out` valid writable storage.
 */
enum RecsimStatus recsim_results_metrics(const struct RecsimResults *results,
                                         size_t index,
                                         struct RecsimMetrics *out);

/**
 * Writes logs, metrics and the manifest under `out_dir`.
 *
 * # Safety
 * `results` must be a live handle and `out_dir` NUL-terminated.
 */
enum RecsimStatus recsim_results_write(const struct RecsimResults *results,
                                       const char *out_dir,
                                       bool force);

/**
 * # Safety
 * `results` must be null or a handle not yet freed.
 */
void recsim_results_free(struct RecsimResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECSIM_H */
