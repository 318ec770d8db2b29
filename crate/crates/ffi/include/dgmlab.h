#ifndef DGMLAB_H
#define DGMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DgmStatus {
  DGM_STATUS_OK = 0,
  DGM_STATUS_NULL_POINTER = 1,
  DGM_STATUS_INVALID_UTF8 = 2,
  DGM_STATUS_CONFIG = 3,
  DGM_STATUS_CONTRACT = 4,
  DGM_STATUS_DIVERGED = 5,
  DGM_STATUS_NUMERICAL = 6,
  DGM_STATUS_IO = 7,
  DGM_STATUS_OUT_OF_RANGE = 8,
  DGM_STATUS_PANIC = 9,
} DgmStatus;

/**
 * Study selector for [`dgm_run_study`].
 */
typedef enum DgmStudy {
  DGM_STUDY_WIDE_LIMIT = 0,
  DGM_STUDY_RESIDUAL_DECAY = 1,
  DGM_STUDY_PINN = 2,
  DGM_STUDY_KERNEL_CHECK = 3,
  DGM_STUDY_DEVIATION = 4,
} DgmStudy;

/**
 * Outcome of a single verdict.
 */
typedef enum DgmVerdictStatus {
  DGM_VERDICT_STATUS_PASS = 0,
  DGM_VERDICT_STATUS_FAIL = 1,
  DGM_VERDICT_STATUS_NOT_APPLICABLE = 2,
} DgmVerdictStatus;

/**
 * Parsed experiment configuration.
 */
typedef struct DgmConfig DgmConfig;

/**
 * Network parameters bound to the architecture of a configuration.
 */
typedef struct DgmNetwork DgmNetwork;

/**
 * Result of a study.
 */
typedef struct DgmReport DgmReport;

/**
 * One verdict of a report. `relation` is -1 for `<`, 0 for `<=`, 1 for `>=`.
 */
typedef struct DgmVerdict {
  double measured;
  double tolerance;
  int32_t relation;
  enum DgmVerdictStatus status;
} DgmVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
 * `len`). Returns the full message length in bytes, 0 if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t dgm_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dgm_version(void);

/**
 * Loads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgmStatus dgm_config_load(const char *path, struct DgmConfig **out);

/**
 * Parses and validates a configuration from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgmStatus dgm_config_parse(const char *toml, struct DgmConfig **out);

/**
 * Shrinks sample counts and horizons for a fast run.
 *
 * # Safety
 * `cfg` must come from `dgm_config_load` or `dgm_config_parse`.
 */
enum DgmStatus dgm_config_set_quick(struct DgmConfig *cfg);

/**
 * Renumbers the network seeds from `seed` and replaces the kernel and batch seeds.
 *
 * # Safety
 * `cfg` must come from `dgm_config_load` or `dgm_config_parse`.
 */
enum DgmStatus dgm_config_override_seeds(struct DgmConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or come from this library and not be freed twice.
 */
void dgm_config_free(struct DgmConfig *cfg);

/**
 * Runs a study; `study` is a [`DgmStudy`] value. `quick` is recorded in the report
 * provenance only.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
enum DgmStatus dgm_run_study(const struct DgmConfig *cfg,
                             int32_t study,
                             bool quick,
                             struct DgmReport **out);

/**
 * Whether every verdict of the report passed.
 *
 * # Safety
 * `report` must be a live report handle and `passed` a valid pointer.
 */
enum DgmStatus dgm_report_passed(const struct DgmReport *report, bool *passed);

/**
 * Number of verdicts in the report.
 *
 * # Safety
 * `report` must be a live report handle and `count` a valid pointer.
 */
enum DgmStatus dgm_report_verdict_count(const struct DgmReport *report, size_t *count);

/**
 * Verdict `index` of the report.
 *
 * # Safety
 * `report` must be a live report handle and `out` a valid pointer.
 */
enum DgmStatus dgm_report_verdict(const struct DgmReport *report,
                                  size_t index,
                                  struct DgmVerdict *out);

/**
 * Writes `summary.json` and the CSV tables into `dir`.
 *
 * # Safety
 * `report` must be a live report handle and `dir` a NUL-terminated string.
 */
enum DgmStatus dgm_report_write(const struct DgmReport *report, const char *dir);

/**
 * # Safety
 * `report` must be null or come from this library and not be freed twice.
 */
void dgm_report_free(struct DgmReport *report);

/**
 * Draws initial parameters for width `width` using the configuration's domain,
 * activation, and initial distribution.
 *
 * # Safety
 * `cfg` must be a live configuration handle and `out` a valid pointer.
 */
enum DgmStatus dgm_network_init(const struct DgmConfig *cfg,
                                size_t width,
                                uint64_t seed,
                                struct DgmNetwork **out);

/**
 * Number of trainable parameters, `(d + 2) N`.
 *
 * # Safety
 * `net` must be a live network handle and `count` a valid pointer.
 */
enum DgmStatus dgm_network_param_count(const struct DgmNetwork *net, size_t *count);

/**
 * Value of the network at `x` (length `dim`).
 *
 * # Safety
 * `x` must be valid for `dim` reads and `value` a valid pointer.
 */
enum DgmStatus dgm_network_eval(const struct DgmNetwork *net,
                                const double *x,
                                size_t dim,
                                double *value);

/**
 * # Safety
 * `net` must be null or come from this library and not be freed twice.
 */
void dgm_network_free(struct DgmNetwork *net);

/**
 * Smooth clipping of `v` at threshold `t`.
 */
double dgm_smooth_clip(double v, double t);

/**
 * Eigenvalues (descending) of the symmetric row-major `n × n` matrix `m` into
 * `eigenvalues`, and the number of modes above `tau λ₁` into `positive`.
 *
 * # Safety
 * `m` must be valid for `n * n` reads, `eigenvalues` for `n` writes, `positive` a valid pointer.
 */
enum DgmStatus dgm_spectral_decompose(const double *m,
                                      size_t n,
                                      double tau,
                                      double *eigenvalues,
                                      size_t *positive);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGMLAB_H */
