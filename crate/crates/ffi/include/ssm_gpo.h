#ifndef SSM_GPO_H
#define SSM_GPO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum SsmStatus {
  SSM_STATUS_OK = 0,
  SSM_STATUS_NULL_POINTER = 1,
  SSM_STATUS_INVALID_INPUT = 2,
  SSM_STATUS_DOMAIN_VIOLATION = 3,
  SSM_STATUS_DIMENSION_MISMATCH = 4,
  SSM_STATUS_UNKNOWN_MODEL = 5,
  SSM_STATUS_DEGENERATE = 6,
  SSM_STATUS_NUMERICAL = 7,
  SSM_STATUS_IO = 8,
  SSM_STATUS_PANIC = 9,
} SsmStatus;

// Resampling scheme for the particle filter.
typedef enum SsmResampling {
  SSM_RESAMPLING_SYSTEMATIC = 0,
  SSM_RESAMPLING_MULTINOMIAL = 1,
} SsmResampling;

// Outcome of a GP optimisation run.
typedef struct SsmGpoResult SsmGpoResult;

// A state-space model.
typedef struct SsmModel SsmModel;

// Scalar settings for [`ssm_gpo_run`]. Fill with [`ssm_gpo_options_default`].
typedef struct SsmGpoOptions {
  size_t iterations;
  size_t particles;
  double zeta;
  uint64_t seed;
  size_t direct_max_evals;
  enum SsmResampling resampling;
} SsmGpoOptions;

// Objective for [`ssm_direct_maximize`]: receives a point of length `dim`.
typedef double (*SsmObjective)(const double *theta, size_t dim, void *user_data);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error of this thread into `buf` (NUL-terminated, truncated
// to `len`). Returns the full message length excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t ssm_last_error_message(char *buf, size_t len);

// Creates a model by registry name (`"lgss"` or `"hullwhite"`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum SsmStatus ssm_model_new(const char *name, struct SsmModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`ssm_model_new`] and not be used afterwards.
void ssm_model_free(struct SsmModel *model);

// Number of parameters, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t ssm_model_param_dim(const struct SsmModel *model);

// Copies the parameter box into `lower` and `upper` (each of length `dim`).
//
// # Safety
// Pointers must be valid for `dim` elements.
enum SsmStatus ssm_model_domain(const struct SsmModel *model,
                                double *lower,
                                double *upper,
                                size_t dim);

// Simulates `steps` states and observations. `states` may be null.
//
// # Safety
// `theta` must hold `dim` values; `observations` (and `states` if non-null)
// must have room for `steps` values.
enum SsmStatus ssm_simulate(const struct SsmModel *model,
                            const double *theta,
                            size_t dim,
                            size_t steps,
                            uint64_t seed,
                            double *states,
                            double *observations);

// One particle-filter log-likelihood estimate. A degenerate run stores
// `-INFINITY` and sets `*degenerate`; the status is still `Ok`.
//
// # Safety
// `theta` must hold `dim` values and `y` must hold `len` values.
enum SsmStatus ssm_pf_loglik(const struct SsmModel *model,
                             const double *theta,
                             size_t dim,
                             const double *y,
                             size_t len,
                             size_t particles,
                             uint64_t seed,
                             enum SsmResampling resampling,
                             double *loglik,
                             bool *degenerate);

// Exact log-likelihood of the linear Gaussian model.
//
// # Safety
// `y` must hold `len` values.
enum SsmStatus ssm_kalman_loglik(double theta, const double *y, size_t len, double *loglik);

// Default settings: 50 iterations, 1000 particles, ζ = 0.01, seed 0.
//
// # Safety
// `options` must be a valid pointer.
enum SsmStatus ssm_gpo_options_default(struct SsmGpoOptions *options);

// Runs GP optimisation from `theta1` and returns a result handle.
//
// # Safety
// `theta1` must hold `dim` values, `y` must hold `len` values and `out`
// must be a valid pointer.
enum SsmStatus ssm_gpo_run(const struct SsmModel *model,
                           const double *y,
                           size_t len,
                           const double *theta1,
                           size_t dim,
                           const struct SsmGpoOptions *options,
                           struct SsmGpoResult **out);

// Releases a result. Null is ignored.
//
// # Safety
// `result` must come from [`ssm_gpo_run`] and not be used afterwards.
void ssm_gpo_result_free(struct SsmGpoResult *result);

// Number of iterations performed, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t ssm_gpo_result_len(const struct SsmGpoResult *result);

// Copies the final estimate and its posterior mean.
//
// # Safety
// `theta` must have room for `dim` values.
enum SsmStatus ssm_gpo_result_estimate(const struct SsmGpoResult *result,
                                       double *theta,
                                       size_t dim,
                                       double *mu);

// Copies iterate `k` (0-based) and the log-likelihood value recorded for it.
//
// # Safety
// `theta` must have room for `dim` values.
enum SsmStatus ssm_gpo_result_iterate(const struct SsmGpoResult *result,
                                      size_t k,
                                      double *theta,
                                      size_t dim,
                                      double *loglik);

// Maximizes `objective` over the box `[lower, upper]` with DIRECT.
//
// # Safety
// `lower`, `upper` and `theta` must hold `dim` values; `objective` must be
// safe to call with `user_data`.
enum SsmStatus ssm_direct_maximize(SsmObjective objective,
                                   void *user_data,
                                   const double *lower,
                                   const double *upper,
                                   size_t dim,
                                   size_t max_evals,
                                   double *theta,
                                   double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSM_GPO_H */
