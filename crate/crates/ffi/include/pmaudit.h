#ifndef PMAUDIT_H
#define PMAUDIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_ERR_NULL = 1,
  PM_STATUS_ERR_INVALID_ARGUMENT = 2,
  PM_STATUS_ERR_IO = 3,
  PM_STATUS_ERR_FORMAT = 4,
  PM_STATUS_ERR_DIMENSION = 5,
  PM_STATUS_ERR_DEGENERATE = 6,
  PM_STATUS_ERR_NOT_CONVERGED = 7,
  PM_STATUS_ERR_PANIC = 99,
} PmStatus;

/**
 * Trained random forest.
 */
typedef struct PmForest PmForest;

/**
 * Fitted MCD estimate.
 */
typedef struct PmMcd PmMcd;

/**
 * Fitted one-class SVM.
 */
typedef struct PmOcsvm PmOcsvm;

/**
 * Per-machine audit stream state.
 */
typedef struct PmStream PmStream;

/**
 * One audit decision. Detector fields are meaningful only when the
 * matching `has_*` flag is 1.
 */
typedef struct PmDecision {
  /**
   * 0 while warming up, 1 once detectors are scoring.
   */
  uint8_t active;
  uint8_t has_ocsvm;
  double ocsvm_score;
  uint8_t ocsvm_flag;
  uint8_t has_mcd;
  double mcd_score;
  uint8_t mcd_flag;
  uint8_t has_ensemble;
  uint8_t ensemble_flag;
} PmDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *pm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pm_version(void);

/**
 * Loads a model written by `pmaudit train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PmStatus pm_forest_load(const char *path, struct PmForest **out);

/**
 * # Safety
 * `forest` must come from [`pm_forest_load`] and not be used afterwards.
 */
void pm_forest_free(struct PmForest *forest);

/**
 * Feature count the model expects; 0 for NULL.
 *
 * # Safety
 * `forest` must be NULL or a live handle.
 */
size_t pm_forest_width(const struct PmForest *forest);

/**
 * Calibrated decision threshold; NaN for NULL.
 *
 * # Safety
 * `forest` must be NULL or a live handle.
 */
double pm_forest_threshold(const struct PmForest *forest);

/**
 * Work-order probabilities for `n_rows` rows of `width` features.
 *
 * # Safety
 * `rows` must hold `n_rows * width` doubles and `out` room for `n_rows`.
 */
enum PmStatus pm_forest_predict(const struct PmForest *forest,
                                const double *data,
                                size_t n_rows,
                                size_t width,
                                double *out);

/**
 * Creates an audit stream. `config_json` may be NULL for the defaults or a
 * JSON object with any of the stream settings, e.g.
 * `{"threshold": 0.4, "warmup": 30, "window": 30}`.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` must be valid.
 */
enum PmStatus pm_stream_new(const char *config_json, struct PmStream **out);

/**
 * Feeds one classifier probability and reports the decision for it.
 *
 * # Safety
 * `stream` must be a live handle and `out` a valid pointer.
 */
enum PmStatus pm_stream_step(struct PmStream *stream, double p, struct PmDecision *out);

/**
 * # Safety
 * `stream` must come from [`pm_stream_new`] and not be used afterwards.
 */
void pm_stream_free(struct PmStream *stream);

/**
 * Fits a one-class SVM on `n` points of dimension `d`. A `sigma` of 0 or
 * less selects the median heuristic.
 *
 * # Safety
 * `data` must hold `n * d` doubles; `out` must be valid.
 */
enum PmStatus pm_ocsvm_fit(const double *data,
                           size_t n,
                           size_t d,
                           double nu,
                           double sigma,
                           struct PmOcsvm **out);

/**
 * Raw anomaly score `rho - f(x)`; positive outside the learned region.
 *
 * # Safety
 * `x` must hold `d` doubles; `out` must be valid.
 */
enum PmStatus pm_ocsvm_score(const struct PmOcsvm *model, const double *x, size_t d, double *out);

/**
 * # Safety
 * `model` must come from [`pm_ocsvm_fit`] and not be used afterwards.
 */
void pm_ocsvm_free(struct PmOcsvm *model);

/**
 * FastMCD on `n` points of dimension `d` with the default support size.
 *
 * # Safety
 * `data` must hold `n * d` doubles; `out` must be valid.
 */
enum PmStatus pm_mcd_fit(const double *data,
                         size_t n,
                         size_t d,
                         size_t n_starts,
                         uint64_t seed,
                         struct PmMcd **out);

/**
 * Robust Mahalanobis distance of `x`.
 *
 * # Safety
 * `x` must hold `d` doubles; `out` must be valid.
 */
enum PmStatus pm_mcd_distance(const struct PmMcd *model, const double *x, size_t d, double *out);

/**
 * Outlier cutoff `sqrt(chi2_{d, 0.975})`; NaN for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
double pm_mcd_cutoff(const struct PmMcd *model);

/**
 * # Safety
 * `model` must come from [`pm_mcd_fit`] and not be used afterwards.
 */
void pm_mcd_free(struct PmMcd *model);

/**
 * F1 of binary decisions against labels (0 when there is nothing to find
 * and nothing was flagged).
 *
 * # Safety
 * Both arrays must hold `n` bytes; `out` must be valid.
 */
enum PmStatus pm_f1(const uint8_t *decisions, const uint8_t *labels, size_t n, double *out);

/**
 * Area under the ROC curve, ties counted as one half.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` must be valid.
 */
enum PmStatus pm_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMAUDIT_H */
