#ifndef BREATH_HAR_H
#define BREATH_HAR_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Activity codes.
 */
#define BH_RUNNING 0

#define BH_WALKING 1

#define BH_SITTING 2

#define BH_SLEEPING 3

/**
 * Channel codes.
 */
#define BH_TEMPERATURE 0

#define BH_HUMIDITY 1

/**
 * Model kinds.
 */
#define BH_MODEL_KNN 0

#define BH_MODEL_DECISION_TREE 1

#define BH_MODEL_RANDOM_FOREST 2

/**
 * Result of every fallible call.
 */
typedef enum BhStatus {
  BH_STATUS_OK = 0,
  BH_STATUS_NULL_POINTER = 1,
  BH_STATUS_INVALID_ARGUMENT = 2,
  BH_STATUS_INVALID_CONFIG = 3,
  BH_STATUS_IO = 4,
  BH_STATUS_RUNTIME = 5,
  BH_STATUS_BUFFER_TOO_SMALL = 6,
  BH_STATUS_PANIC = 7,
} BhStatus;

/**
 * Opaque trained classifier.
 */
typedef struct BhModel BhModel;

/**
 * Opaque labeled sensor series.
 */
typedef struct BhSeries BhSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *bh_last_error(void);

/**
 * Library version, static storage.
 */
const char *bh_version(void);

/**
 * Reads a series CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BhStatus bh_series_read_csv(const char *path, struct BhSeries **out);

/**
 * Generates a noise-bearing synthetic session.
 *
 * # Safety
 * `out` must be writable.
 */
enum BhStatus bh_series_synthesize(int32_t activity_code,
                                   uint32_t subject,
                                   double duration_s,
                                   double sampling_hz,
                                   uint64_t seed,
                                   struct BhSeries **out);

/**
 * # Safety
 * `series` must come from this library and not be used afterwards.
 */
void bh_series_free(struct BhSeries *series);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `series` must be null or a live handle.
 */
size_t bh_series_len(const struct BhSeries *series);

/**
 * # Safety
 * `series` must be a live handle; `out` writable.
 */
enum BhStatus bh_series_activity(const struct BhSeries *series, int32_t *out);

/**
 * Copies one channel into `buf` (NaN for missing). With a null `buf` only
 * the required length is written to `written`.
 *
 * # Safety
 * `buf` must hold `cap` doubles or be null; `written` must be writable.
 */
enum BhStatus bh_series_channel(const struct BhSeries *series,
                                int32_t channel_code,
                                double *buf,
                                size_t cap,
                                size_t *written);

/**
 * `(observed_min - delta, observed_max + delta)`.
 *
 * # Safety
 * `lower` and `upper` must be writable.
 */
enum BhStatus bh_compute_bounds(double observed_min,
                                double observed_max,
                                double delta,
                                double *lower,
                                double *upper);

/**
 * `(x - x_min) / (x_max - x_min)`, clipped to [0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
enum BhStatus bh_min_max_scale(double x, double x_min, double x_max, double *out);

/**
 * Breath peaks of a gap-free signal with pipeline defaults for the rate.
 *
 * # Safety
 * `signal` must hold `len` doubles; `count` must be writable.
 */
enum BhStatus bh_count_breaths(const double *signal, size_t len, double sampling_hz, size_t *count);

/**
 * Accuracy and macro F1 of a row-major `n x n` confusion matrix (rows are
 * actual classes in activity-code order).
 *
 * # Safety
 * `counts` must hold `n * n` values; outputs must be writable.
 */
enum BhStatus bh_evaluate_confusion(const uint64_t *counts,
                                    size_t n,
                                    double *accuracy,
                                    double *macro_f1);

/**
 * Trains a model with default hyperparameters on windows of `n` series.
 * All series must share one sampling rate and be gap-free on a uniform grid.
 *
 * # Safety
 * `series` must hold `n` live handles; `out` must be writable.
 */
enum BhStatus bh_model_train(const struct BhSeries *const *series,
                             size_t n,
                             int32_t kind,
                             uint64_t seed,
                             struct BhModel **out);

/**
 * # Safety
 * `path` NUL-terminated; `out` writable.
 */
enum BhStatus bh_model_load(const char *path, struct BhModel **out);

/**
 * # Safety
 * `model` live; `path` NUL-terminated.
 */
enum BhStatus bh_model_save(const struct BhModel *model, const char *path);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void bh_model_free(struct BhModel *model);

/**
 * Predicts one activity code per 30 s window of `series`. With a null
 * `labels` only the window count is written to `written`.
 *
 * # Safety
 * `labels` must hold `cap` ints or be null; `written` must be writable.
 */
enum BhStatus bh_model_predict_windows(const struct BhModel *model,
                                       const struct BhSeries *series,
                                       int32_t *labels,
                                       size_t cap,
                                       size_t *written);

/**
 * Runs the full batch pipeline. `config_path` may be null for defaults.
 *
 * # Safety
 * Paths must be NUL-terminated strings.
 */
enum BhStatus bh_run_pipeline(const char *config_path, const char *input_dir, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BREATH_HAR_H */
