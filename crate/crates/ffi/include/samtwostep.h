#ifndef SAMTWOSTEP_H
#define SAMTWOSTEP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which estimator an interval refers to.
 */
typedef enum SamEstimator {
  SAM_ESTIMATOR_PRESMOOTH = 0,
  SAM_ESTIMATOR_RESMOOTH = 1,
} SamEstimator;

/**
 * Interior knot placement of a B-spline basis.
 */
typedef enum SamKnots {
  SAM_KNOTS_UNIFORM = 0,
  SAM_KNOTS_QUANTILE = 1,
} SamKnots;

/**
 * Result of every fallible call.
 */
typedef enum SamStatus {
  SAM_STATUS_OK = 0,
  SAM_STATUS_NULL_POINTER = 1,
  SAM_STATUS_INVALID_ARGUMENT = 2,
  SAM_STATUS_DOMAIN = 3,
  SAM_STATUS_RANK_DEFICIENT = 4,
  SAM_STATUS_ILL_CONDITIONED = 5,
  SAM_STATUS_NON_FINITE = 6,
  SAM_STATUS_NUMERICAL = 7,
  SAM_STATUS_PANIC = 8,
} SamStatus;

/**
 * Opaque univariate basis.
 */
typedef struct SamBasis SamBasis;

/**
 * Opaque fitted two-step estimator.
 */
typedef struct SamFit SamFit;

/**
 * Settings of [`samtwostep_fit_new`].
 */
typedef struct SamFitOptions {
  /**
   * Cubic B-spline dimension of the presmoother.
   */
  size_t d_pre;
  /**
   * Cubic B-spline dimension of the least-squares resmoother.
   */
  size_t d_re;
  double lambda;
  double eta;
  enum SamKnots knots;
  /**
   * Relative objective tolerance of the group-Lasso solver.
   */
  double tol;
  size_t max_sweeps;
} SamFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *samtwostep_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *samtwostep_version(void);

/**
 * Clamped B-spline basis of `degree` with `intervals` partition intervals on `[lo, hi]`.
 *
 * With `SAM_KNOTS_QUANTILE` the interior knots are placed at quantiles of the
 * `n_sample` values in `sample`; otherwise `sample` may be null.
 *
 * # Safety
 * `sample` must point to `n_sample` doubles when quantile knots are requested,
 * and `out` must be a valid pointer.
 */
enum SamStatus samtwostep_basis_new_bspline(size_t degree,
                                            size_t intervals,
                                            double lo,
                                            double hi,
                                            enum SamKnots knots,
                                            const double *sample,
                                            size_t n_sample,
                                            struct SamBasis **out);

/**
 * Orthonormal piecewise Legendre basis of `degree` on `intervals` equal pieces of `[lo, hi]`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SamStatus samtwostep_basis_new_legendre(size_t degree,
                                             size_t intervals,
                                             double lo,
                                             double hi,
                                             struct SamBasis **out);

/**
 * Number of basis functions, or 0 for a null handle.
 *
 * # Safety
 * `basis` must be null or a live handle.
 */
size_t samtwostep_basis_dimension(const struct SamBasis *basis);

/**
 * Writes the `n x dimension` design matrix in row-major order into `out`.
 *
 * # Safety
 * `points` must hold `n` doubles and `out` room for `n * dimension` doubles.
 */
enum SamStatus samtwostep_basis_eval(const struct SamBasis *basis,
                                     const double *points,
                                     size_t n,
                                     double *out);

/**
 * # Safety
 * `basis` must be null or a handle not yet freed.
 */
void samtwostep_basis_free(struct SamBasis *basis);

/**
 * Defaults: `d_pre = 20`, `d_re = 10`, uniform knots, solver tolerance `1e-8`.
 * The penalties are zero and must be set.
 */
struct SamFitOptions samtwostep_fit_options_default(void);

/**
 * Fits the two-step estimator of the first component.
 *
 * `x` is the `n x q` covariate matrix in row-major order with column 0 the
 * component of interest; covariate `j` is supported on `[lo[j], hi[j]]`.
 *
 * # Safety
 * `y` must hold `n` doubles, `x` must hold `n * q`, `lo` and `hi` must hold `q`,
 * and `out` must be a valid pointer.
 */
enum SamStatus samtwostep_fit_new(const double *y,
                                  const double *x,
                                  size_t n,
                                  size_t q,
                                  const double *lo,
                                  const double *hi,
                                  const struct SamFitOptions *options,
                                  struct SamFit **out);

/**
 * Pointwise interval `center ± half` at `x` for noise level `sigma`.
 *
 * # Safety
 * `fit` must be a live handle; the output pointers must be valid.
 */
enum SamStatus samtwostep_fit_interval(const struct SamFit *fit,
                                       enum SamEstimator estimator,
                                       double x,
                                       double sigma,
                                       double level,
                                       double *center,
                                       double *half_width);

/**
 * Empirical angle between the first block and the rest; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double samtwostep_fit_rho_hat(const struct SamFit *fit);

/**
 * Condition number of the debiasing system; NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double samtwostep_fit_condition(const struct SamFit *fit);

/**
 * Pseudo-responses (presmoothed values at the data) written into `out`, which holds `n` doubles.
 *
 * # Safety
 * `fit` must be a live handle and `out` must have room for `n` doubles.
 */
enum SamStatus samtwostep_fit_pseudo_responses(const struct SamFit *fit, double *out, size_t n);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void samtwostep_fit_free(struct SamFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAMTWOSTEP_H */
