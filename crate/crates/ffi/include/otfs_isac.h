#ifndef OTFS_ISAC_H
#define OTFS_ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_INVALID_ARGUMENT = 1,
  ISAC_STATUS_DIMENSION_MISMATCH = 2,
  ISAC_STATUS_OUT_OF_RANGE = 3,
  ISAC_STATUS_INFEASIBLE = 4,
  ISAC_STATUS_DEGENERATE = 5,
  ISAC_STATUS_UNSUPPORTED = 6,
  ISAC_STATUS_IO = 7,
  ISAC_STATUS_NULL_POINTER = 8,
  ISAC_STATUS_PANIC = 9,
} IsacStatus;

/**
 * Beamforming model (trace table and steering vectors) of a scenario.
 */
typedef struct IsacBeamModel IsacBeamModel;

/**
 * Experiment configuration.
 */
typedef struct IsacConfig IsacConfig;

/**
 * One sampled channel scenario.
 */
typedef struct IsacScenario IsacScenario;

/**
 * Experiment result table.
 */
typedef struct IsacTable IsacTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *isac_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the size needed including the NUL, or 0 when
 * no error has been recorded.
 *
 * # Safety
 * `buf` must be NULL or valid for `len` bytes.
 */
size_t isac_last_error_message(char *buf, size_t len);

/**
 * Reference configuration.
 *
 * # Safety
 * `out` must be a valid pointer; the handle is released with [`isac_config_free`].
 */
enum IsacStatus isac_config_default(struct IsacConfig **out);

/**
 * Parses a flat JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IsacStatus isac_config_from_json(const char *json, struct IsacConfig **out);

/**
 * Overrides the trial count and seed.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum IsacStatus isac_config_set_run(struct IsacConfig *cfg, size_t trials, uint64_t seed);

/**
 * # Safety
 * `cfg` must be NULL or a handle not yet freed.
 */
void isac_config_free(struct IsacConfig *cfg);

/**
 * Runs an experiment; `kind` is one of `estimate`, `prob-sweep`,
 * `mse-sweep`, `beamform`, `rate-sweep`, `convergence`.
 *
 * # Safety
 * `cfg` must be a live handle, `kind` a NUL-terminated string, `out` valid.
 */
enum IsacStatus isac_run_experiment(const struct IsacConfig *cfg,
                                    const char *kind,
                                    struct IsacTable **out);

/**
 * Number of data rows (0 for a NULL handle).
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t isac_table_rows(const struct IsacTable *t);

/**
 * Number of metric columns, excluding the config hash (0 for NULL).
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t isac_table_cols(const struct IsacTable *t);

/**
 * Copies a column name into `buf`; returns the size needed, or 0 when
 * `col` is out of range.
 *
 * # Safety
 * `t` must be a live handle, `buf` NULL or valid for `len` bytes.
 */
size_t isac_table_column_name(const struct IsacTable *t, size_t col, char *buf, size_t len);

/**
 * Reads one cell.
 *
 * # Safety
 * `t` must be a live handle and `out` valid.
 */
enum IsacStatus isac_table_get(const struct IsacTable *t, size_t row, size_t col, double *out);

/**
 * Writes the table as CSV.
 *
 * # Safety
 * `t` must be a live handle and `path` a NUL-terminated string.
 */
enum IsacStatus isac_table_write_csv(const struct IsacTable *t, const char *path);

/**
 * # Safety
 * `t` must be NULL or a handle not yet freed.
 */
void isac_table_free(struct IsacTable *t);

/**
 * Samples the scenario of trial `trial` under the config's seed.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid.
 */
enum IsacStatus isac_scenario_sample(const struct IsacConfig *cfg,
                                     uint64_t trial,
                                     double snr_db,
                                     struct IsacScenario **out);

/**
 * True LoS cascaded Doppler in Hz.
 *
 * # Safety
 * `s` must be a live handle and `out` valid.
 */
enum IsacStatus isac_scenario_los_doppler(const struct IsacScenario *s, double *out);

/**
 * # Safety
 * `s` must be NULL or a handle not yet freed.
 */
void isac_scenario_free(struct IsacScenario *s);

/**
 * Ratio Doppler estimate (Hz) from `n` pilot amplitudes on the config's grid.
 *
 * # Safety
 * `cfg` must be a live handle, `z` valid for `n` doubles, `nu_hat` valid.
 */
enum IsacStatus isac_ratio_estimate(const struct IsacConfig *cfg,
                                    const double *z,
                                    size_t n,
                                    double *nu_hat);

/**
 * Closed-form probability that the larger side peak stays larger.
 *
 * # Safety
 * `out` must be valid.
 */
enum IsacStatus isac_p_eff_closed(double z2, double z3, double sigma2, double *out);

/**
 * Builds the beamforming model of a scenario.
 *
 * # Safety
 * `s` must be a live handle and `out` valid.
 */
enum IsacStatus isac_beam_model_new(const struct IsacScenario *s, struct IsacBeamModel **out);

/**
 * Runs the joint optimizer for an MSE target of `gamma1_bins` squared
 * Doppler bins. Any output pointer may be NULL.
 *
 * # Safety
 * `m` must be a live handle; non-NULL outputs must be valid.
 */
enum IsacStatus isac_beam_optimize(const struct IsacBeamModel *m,
                                   double gamma1_bins,
                                   double *objective,
                                   double *rate,
                                   size_t *iterations);

/**
 * Rate of the strongest-path beam pair.
 *
 * # Safety
 * `m` must be a live handle and `rate` valid.
 */
enum IsacStatus isac_beam_rate_strongest(const struct IsacBeamModel *m, double *rate);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void isac_beam_model_free(struct IsacBeamModel *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTFS_ISAC_H */
