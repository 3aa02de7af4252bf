#ifndef CARDIO_LM_H
#define CARDIO_LM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the command-line exit codes.
 */
typedef enum CardioStatus {
  CARDIO_STATUS_OK = 0,
  CARDIO_STATUS_IO = 1,
  CARDIO_STATUS_DATA = 2,
  CARDIO_STATUS_DIVERGED = 3,
  CARDIO_STATUS_INVALID_ARGUMENT = 4,
  CARDIO_STATUS_PANIC = 5,
} CardioStatus;

typedef enum CardioDampingMode {
  CARDIO_DAMPING_MODE_IDENTITY = 0,
  CARDIO_DAMPING_MODE_DIAGONAL = 1,
} CardioDampingMode;

typedef enum CardioTermination {
  CARDIO_TERMINATION_MAX_ITERATIONS = 0,
  CARDIO_TERMINATION_GRADIENT_CONVERGED = 1,
  CARDIO_TERMINATION_STEP_CONVERGED = 2,
  CARDIO_TERMINATION_SSE_REACHED = 3,
  CARDIO_TERMINATION_LAMBDA_OVERFLOW = 4,
} CardioTermination;

/**
 * Opaque saved model: schema, normalization and network.
 */
typedef struct CardioModel CardioModel;

typedef struct CardioLmOptions {
  double lambda0;
  double lambda_increase;
  double lambda_decrease;
  double lambda_max;
  double lambda_min;
  enum CardioDampingMode mode;
  uintptr_t max_iterations;
  double gradient_tol;
  double step_tol;
  double sse_tol;
} CardioLmOptions;

/**
 * Residual callback for [`cardio_lm_fit`].
 *
 * Fills `residuals` (length `n_residuals`) with `r(β) = y − f(β)`. When
 * `jacobian` is non-null it must also fill it, row-major
 * `n_residuals × n_params`, with `∂f/∂β` (the model derivative, not the
 * residual derivative). Returns 0 on success; any other value aborts the
 * fit with `CARDIO_STATUS_DIVERGED`.
 */
typedef int32_t (*CardioResidualFn)(void *user_data,
                                    const double *beta,
                                    uintptr_t n_params,
                                    double *residuals,
                                    uintptr_t n_residuals,
                                    double *jacobian);

typedef struct CardioLmSummary {
  uintptr_t proposals;
  uintptr_t accepted;
  double initial_sse;
  double final_sse;
  enum CardioTermination termination;
} CardioLmSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *cardio_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cardio_version(void);

/**
 * Loads a saved model. On success `*out` receives a handle to release with
 * [`cardio_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CardioStatus cardio_model_load(const char *path, struct CardioModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum CardioStatus cardio_model_save(const struct CardioModel *model, const char *path);

/**
 * Releases a handle from [`cardio_model_load`] or [`cardio_train`]. Null is
 * ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void cardio_model_free(struct CardioModel *model);

/**
 * Number of raw feature values a row must contain; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t cardio_model_feature_count(const struct CardioModel *model);

/**
 * Scores one raw feature row (schema order, unnormalized).
 *
 * # Safety
 * `features` must point to `len` doubles and `out_score` to one double.
 */
enum CardioStatus cardio_model_score(const struct CardioModel *model,
                                     const double *features,
                                     uintptr_t len,
                                     double *out_score);

/**
 * Scores `n_rows` row-major rows of `n_features` raw values each into
 * `out_scores`.
 *
 * # Safety
 * `rows` must hold `n_rows * n_features` doubles and `out_scores` `n_rows`.
 */
enum CardioStatus cardio_model_score_batch(const struct CardioModel *model,
                                           const double *rows,
                                           uintptr_t n_rows,
                                           uintptr_t n_features,
                                           double *out_scores);

/**
 * Runs the training pipeline. `config_path` may be null; `data_path` and
 * `out_dir` override the config. On success, if `out_model` is non-null it
 * receives a handle to the trained model.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out_model` must be
 * null or valid.
 */
enum CardioStatus cardio_train(const char *config_path,
                               const char *data_path,
                               const char *out_dir,
                               uint64_t seed,
                               struct CardioModel **out_model);

struct CardioLmOptions cardio_lm_default_options(void);

/**
 * Minimizes `Σ rᵢ(β)²` starting from `beta` (length `n_params`), which is
 * overwritten with the result on success. `options` and `summary` may be
 * null.
 *
 * # Safety
 * `beta` must hold `n_params` doubles; `callback` must honor the
 * [`CardioResidualFn`] contract.
 */
enum CardioStatus cardio_lm_fit(CardioResidualFn callback,
                                void *user_data,
                                uintptr_t n_params,
                                uintptr_t n_residuals,
                                double *beta,
                                const struct CardioLmOptions *options,
                                struct CardioLmSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARDIO_LM_H */
