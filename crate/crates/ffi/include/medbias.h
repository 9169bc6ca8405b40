#ifndef MEDBIAS_H
#define MEDBIAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum MedbiasStatus {
  MEDBIAS_STATUS_OK = 0,
  MEDBIAS_STATUS_NULL_POINTER = 1,
  MEDBIAS_STATUS_INVALID_ARGUMENT = 2,
  MEDBIAS_STATUS_NON_CONVEX = 3,
  MEDBIAS_STATUS_NO_BRACKETED_ROOT = 4,
  MEDBIAS_STATUS_NO_CONVERGENCE = 5,
  MEDBIAS_STATUS_COLLINEAR = 6,
  MEDBIAS_STATUS_IDENTITY_VIOLATION = 7,
  MEDBIAS_STATUS_IDENTIFIABILITY = 8,
  MEDBIAS_STATUS_DEGENERATE = 9,
  MEDBIAS_STATUS_CONFIG = 10,
  MEDBIAS_STATUS_IO = 11,
  MEDBIAS_STATUS_PANIC = 12,
} MedbiasStatus;

/*
 Opaque convex (or biweight) location objective over a fixed sample.
 */
typedef struct MedbiasObjective MedbiasObjective;

/*
 Monte-Carlo median-bias estimate.
 */
typedef struct MedbiasEstimate {
  double point;
  double std_err;
  uint64_t reps;
  double p_le;
  double p_ge;
} MedbiasEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or "" after a success.
 The pointer stays valid until the next library call on this thread.
 */
const char *medbias_last_error(void);

/*
 (1/2 − min{p_le, p_ge})₊.

 # Safety
 `out_value` must be a valid pointer to a double.
 */
enum MedbiasStatus medbias_med_bias(double p_le, double p_ge, double *out_value);

/*
 Plug-in median bias of `len` estimator draws against `target`.

 # Safety
 `values` must point to `len` doubles; `out_estimate` must be valid.
 */
enum MedbiasStatus medbias_mc_med_bias(const double *values,
                                       uintptr_t len,
                                       double target,
                                       struct MedbiasEstimate *out_estimate);

/*
 Bound from the strict-sign probabilities of the score at the target.

 # Safety
 `out_value` must be a valid pointer to a double.
 */
enum MedbiasStatus medbias_convex_bound(double p_neg,
                                        double p_zero,
                                        double p_pos,
                                        double *out_value);

/*
 Exact median bias of a smooth Z-estimator from P(score ≥ 0), P(score ≤ 0).

 # Safety
 `out_value` must be a valid pointer to a double.
 */
enum MedbiasStatus medbias_z_exact(double p_weak_ge, double p_weak_le, double *out_value);

/*
 Builds an objective from a JSON kind such as `{"kind":"lp","p":1.5}`
 and `len` observations. The data are copied.

 # Safety
 `kind_json` must be a NUL-terminated string, `data` must point to `len`
 doubles and `out_handle` must be valid.
 */
enum MedbiasStatus medbias_objective_new(const char *kind_json,
                                         const double *data,
                                         uintptr_t len,
                                         struct MedbiasObjective **out_handle);

/*
 Releases a handle from [`medbias_objective_new`]. Null is ignored.

 # Safety
 `handle` must come from [`medbias_objective_new`] and not be freed twice.
 */
void medbias_objective_free(struct MedbiasObjective *handle);

/*
 M_n(θ).

 # Safety
 `handle` must be live; `out_value` must be valid.
 */
enum MedbiasStatus medbias_objective_eval(const struct MedbiasObjective *handle,
                                          double theta,
                                          double *out_value);

/*
 Left and right derivatives of M_n at θ.

 # Safety
 `handle` must be live; both out-pointers must be valid.
 */
enum MedbiasStatus medbias_objective_subgradient(const struct MedbiasObjective *handle,
                                                 double theta,
                                                 double *out_left,
                                                 double *out_right);

/*
 Minimizer of a convex objective on [lo, hi].

 # Safety
 `handle` must be live; `out_theta` must be valid.
 */
enum MedbiasStatus medbias_objective_minimize(const struct MedbiasObjective *handle,
                                              double lo,
                                              double hi,
                                              double *out_theta);

/*
 Root of the estimating equation Ṁ_n(θ) = 0 on [lo, hi].

 # Safety
 `handle` must be live; `out_theta` must be valid.
 */
enum MedbiasStatus medbias_objective_solve_z(const struct MedbiasObjective *handle,
                                             double lo,
                                             double hi,
                                             double *out_theta);

/*
 Coefficient of t in the least-squares regression of y on (t, x), with
 `x` an n×d row-major matrix.

 # Safety
 `y` and `t` must point to `n` doubles, `x` to `n*d` doubles, and
 `out_theta` must be valid.
 */
enum MedbiasStatus medbias_fwl(const double *y,
                               const double *t,
                               const double *x,
                               uintptr_t n,
                               uintptr_t d,
                               double *out_theta);

/*
 Replication seed for (master, index, label).

 # Safety
 `label` must be a NUL-terminated UTF-8 string; `out_seed` must be valid.
 */
enum MedbiasStatus medbias_derive_seed(uint64_t master_seed,
                                       uint64_t index,
                                       const char *label,
                                       uint64_t *out_seed);

/*
 Number of batches ⌈log₂(2/α)⌉ of the min/max interval.

 # Safety
 `out_batches` must be valid.
 */
enum MedbiasStatus medbias_hulc_batches(double alpha, uintptr_t *out_batches);

/*
 Runs a JSON experiment config with `workers` threads (0: one per core)
 and returns the CSV report (or JSON when `json_output` is nonzero) in
 `*out_report`, to be released with [`medbias_string_free`].

 # Safety
 `config_json` must be a NUL-terminated string; `out_report` must be valid.
 */
enum MedbiasStatus medbias_run_experiment(const char *config_json,
                                          uintptr_t workers,
                                          int32_t json_output,
                                          char **out_report);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void medbias_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDBIAS_H */
