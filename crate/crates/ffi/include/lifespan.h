#ifndef LIFESPAN_H
#define LIFESPAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  LS_STATUS_INVALID_ARGUMENT = 2,
  LS_STATUS_DATA_ERROR = 3,
  LS_STATUS_NUMERICAL_ERROR = 4,
  LS_STATUS_IO_ERROR = 5,
  LS_STATUS_PANIC = 6,
} LsStatus;

typedef enum LsFamily {
  LS_FAMILY_GPD = 0,
  LS_FAMILY_EXPONENTIAL = 1,
  LS_FAMILY_GOMPERTZ = 2,
} LsFamily;

/**
 * A validated data set with its sampling frame.
 */
typedef struct LsDataset LsDataset;

/**
 * A fitted model with standard errors and fit metadata.
 */
typedef struct LsFit LsFit;

/**
 * A parametric lifetime distribution for the excess over the threshold.
 */
typedef struct LsModel LsModel;

/**
 * Test statistic and p-value.
 */
typedef struct LsTest {
  double statistic;
  double p_value;
} LsTest;

/**
 * Pooled estimate with its standard error and confidence limits.
 */
typedef struct LsPooled {
  double estimate;
  double se;
  double lower;
  double upper;
} LsPooled;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ls_last_error(void);

/**
 * Library version as a static string.
 */
const char *ls_version(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ls_string_free(char *s);

/**
 * Creates a model. `p2` is ignored for the exponential family.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_model_new(enum LsFamily family, double p1, double p2, struct LsModel **out_model);

/**
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void ls_model_free(struct LsModel *model);

/**
 * Survival probability beyond excess `x` years.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_model_survival(const struct LsModel *model, double x, double *value);

/**
 * Density at excess `x` years.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_model_density(const struct LsModel *model, double x, double *value);

/**
 * Hazard at excess `x` years, per year.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_model_hazard(const struct LsModel *model, double x, double *value);

/**
 * Quantile of probability `p`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_model_quantile(const struct LsModel *model, double p, double *value);

/**
 * Loads a records CSV under the frame given as JSON text.
 *
 * # Safety
 * Strings must be NUL-terminated; `out_dataset` must be valid.
 */
enum LsStatus ls_dataset_load_csv(const char *path,
                                  const char *frame_json,
                                  struct LsDataset **out_dataset);

/**
 * Simulates a synthetic data set (`istat`, `france` or `idl`).
 *
 * # Safety
 * `preset` must be NUL-terminated; `out_dataset` must be valid.
 */
enum LsStatus ls_dataset_generate(const char *preset,
                                  uint64_t seed,
                                  struct LsDataset **out_dataset);

/**
 * # Safety
 * `dataset` must come from this library and not have been freed.
 */
void ls_dataset_free(struct LsDataset *dataset);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be valid or null.
 */
size_t ls_dataset_len(const struct LsDataset *dataset);

/**
 * Number of deaths, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be valid or null.
 */
size_t ls_dataset_deaths(const struct LsDataset *dataset);

/**
 * Fits `family` above `threshold`; NaN uses the frame's threshold.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_fit(const struct LsDataset *dataset,
                     double threshold,
                     enum LsFamily family,
                     struct LsFit **out_fit);

/**
 * # Safety
 * `fit` must come from this library and not have been freed.
 */
void ls_fit_free(struct LsFit *fit);

/**
 * Number of parameters, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be valid or null.
 */
size_t ls_fit_n_parameters(const struct LsFit *fit);

/**
 * Estimate and standard error of parameter `index` (σ first). The standard
 * error is NaN when the observed information is not positive definite.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_fit_parameter(const struct LsFit *fit, size_t index, double *estimate, double *se);

/**
 * Maximized log-likelihood.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_fit_loglik(const struct LsFit *fit, double *value);

/**
 * Copies the fitted distribution into a new model handle.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_fit_model(const struct LsFit *fit, struct LsModel **out_model);

/**
 * The fit as JSON. Release with [`ls_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_fit_to_json(const struct LsFit *fit, char **out_json);

/**
 * Likelihood-ratio test of γ = 0 in the GPD, against χ²₁.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_lrt_gamma_zero(const struct LsDataset *dataset,
                                double threshold,
                                struct LsTest *result);

/**
 * Boundary likelihood-ratio test of β = 0 in the Gompertz model, against ½χ²₀ + ½χ²₁.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LsStatus ls_boundary_test_gompertz(const struct LsDataset *dataset,
                                        double threshold,
                                        struct LsTest *result);

/**
 * Inverse-variance pooling of `n` estimates with standard errors.
 *
 * # Safety
 * `estimates` and `ses` must point to `n` values; `result` must be valid.
 */
enum LsStatus ls_pool(const double *estimates,
                      const double *ses,
                      size_t n,
                      double level,
                      struct LsPooled *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIFESPAN_H */
