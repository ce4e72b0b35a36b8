#ifndef DELAYSGD_H
#define DELAYSGD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DSGD_STATUS_OK = 0,
  DSGD_STATUS_NULL_POINTER = 1,
  DSGD_STATUS_INVALID_UTF8 = 2,
  DSGD_STATUS_INVALID_ARGUMENT = 3,
  DSGD_STATUS_CONFIG = 4,
  DSGD_STATUS_INFEASIBLE = 5,
  DSGD_STATUS_NUMERICAL = 6,
  DSGD_STATUS_INVARIANT = 7,
  DSGD_STATUS_IO = 8,
  DSGD_STATUS_OUT_OF_RANGE = 9,
  DSGD_STATUS_DIMENSION_MISMATCH = 10,
  DSGD_STATUS_PANIC = 11,
} DsgdStatus;

/**
 * Per-record quantities of a trajectory.
 */
typedef enum {
  DSGD_METRIC_GRAD_MAP_SQ = 0,
  DSGD_METRIC_RUNNING_MEAN_GRAD_MAP_SQ = 1,
  /**
   * Needs a suite with a known minimizer.
   */
  DSGD_METRIC_DIST_SQ = 2,
  /**
   * Suboptimality of the step-weighted average iterate.
   */
  DSGD_METRIC_SUBOPTIMALITY = 3,
  DSGD_METRIC_STEP_SIZE = 4,
} DsgdMetric;

/**
 * A validated experiment.
 */
typedef struct DsgdExperiment DsgdExperiment;

/**
 * One simulated run.
 */
typedef struct DsgdTrajectory DsgdTrajectory;

/**
 * Constants of a built experiment. `g` is NaN when no certificate exists.
 */
typedef struct {
  size_t n;
  size_t d;
  double l;
  double mu;
  double g;
  double c;
  double kappa;
  uint64_t horizon;
} DsgdConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *dsgd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dsgd_version(void);

/**
 * Parses and validates an experiment document, certifying `G` when the
 * document does not declare it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
DsgdStatus dsgd_experiment_from_json(const char *json, DsgdExperiment **out);

/**
 * # Safety
 * `exp` must be NULL or a handle from [`dsgd_experiment_from_json`] not yet freed.
 */
void dsgd_experiment_free(DsgdExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_experiment_constants(const DsgdExperiment *exp, DsgdConstants *out);

/**
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_experiment_seed_count(const DsgdExperiment *exp, size_t *out);

/**
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_experiment_seed(const DsgdExperiment *exp, size_t index, uint64_t *out);

/**
 * The normalized experiment document. Free it with [`dsgd_string_free`].
 *
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_experiment_normalized_json(const DsgdExperiment *exp, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void dsgd_string_free(char *s);

/**
 * Runs the experiment template with `seed`. When the run fails midway the
 * status reports why and `*out` still receives the partial trajectory.
 *
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_experiment_run_seed(const DsgdExperiment *exp, uint64_t seed, DsgdTrajectory **out);

/**
 * Runs every seed and writes the output files. `output_dir` may be NULL to
 * use the directory named in the document. `*passed` is 1 when the fit
 * assertion and all invariants hold.
 *
 * # Safety
 * `exp` must be a live handle; `output_dir` NULL or NUL-terminated; `passed` writable.
 */
DsgdStatus dsgd_experiment_run(const DsgdExperiment *exp, const char *output_dir, int32_t *passed);

/**
 * # Safety
 * `traj` must be NULL or a handle from this library not yet freed.
 */
void dsgd_trajectory_free(DsgdTrajectory *traj);

/**
 * Number of records, the dimension, the number of agents, and whether the
 * run stopped early (1) or completed (0).
 *
 * # Safety
 * `traj` must be a live handle; every output pointer must be writable or NULL.
 */
DsgdStatus dsgd_trajectory_shape(const DsgdTrajectory *traj,
                                 size_t *records,
                                 size_t *dim,
                                 size_t *agents,
                                 int32_t *partial);

/**
 * Time index of record `index`.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_trajectory_time(const DsgdTrajectory *traj, size_t index, uint64_t *out);

/**
 * Copies the iterate of record `index` into `buf`, which holds `len = d` doubles.
 *
 * # Safety
 * `traj` must be a live handle; `buf` must have room for `len` doubles.
 */
DsgdStatus dsgd_trajectory_iterate(const DsgdTrajectory *traj,
                                   size_t index,
                                   double *buf,
                                   size_t len);

/**
 * Copies `tau_i(t)` for every agent into `buf` (`len` = number of agents).
 * Agents not yet heard from report -1. The final record has no stamps.
 *
 * # Safety
 * `traj` must be a live handle; `buf` must have room for `len` values.
 */
DsgdStatus dsgd_trajectory_stamps(const DsgdTrajectory *traj,
                                  size_t index,
                                  int64_t *buf,
                                  size_t len);

/**
 * One metric of record `index`.
 *
 * # Safety
 * `traj` must be a live handle; `out` must be writable.
 */
DsgdStatus dsgd_trajectory_metric(const DsgdTrajectory *traj,
                                  size_t index,
                                  DsgdMetric metric,
                                  double *out);

/**
 * Euclidean projection of `y` onto the set described by `set_json`
 * (the same document form as an experiment's `set`).
 *
 * # Safety
 * `set_json` NUL-terminated; `y` and `out` must each hold `len` doubles.
 */
DsgdStatus dsgd_project(const char *set_json, const double *y, size_t len, double *out);

/**
 * `(x - P_S[x - eta v]) / eta` for the set described by `set_json`.
 *
 * # Safety
 * `set_json` NUL-terminated; `x`, `v` and `out` must each hold `len` doubles.
 */
DsgdStatus dsgd_gradient_mapping(const char *set_json,
                                 const double *x,
                                 const double *v,
                                 size_t len,
                                 double eta,
                                 double *out);

/**
 * Constant-step neighborhood radius. With `has_q == 0` the bias term is
 * omitted (the diminishing-bias variant).
 *
 * # Safety
 * `out` must be writable.
 */
DsgdStatus dsgd_neighborhood_radius(size_t n,
                                    double g,
                                    double c,
                                    double l,
                                    double mu,
                                    double eta,
                                    int32_t has_q,
                                    double q,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELAYSGD_H */
