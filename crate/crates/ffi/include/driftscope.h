#ifndef DRIFTSCOPE_H
#define DRIFTSCOPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible `ds_*` function.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_UTF8 = 2,
  DS_STATUS_IO = 3,
  DS_STATUS_PARSE = 4,
  DS_STATUS_EMPTY_LOG = 5,
  DS_STATUS_INVALID_ARGUMENT = 6,
  DS_STATUS_MODEL = 7,
  DS_STATUS_BUFFER_TOO_SMALL = 8,
  DS_STATUS_PANIC = 99,
} DsStatus;

/**
 * A parsed event log.
 */
typedef struct DsLog DsLog;

/**
 * A trained model.
 */
typedef struct DsModel DsModel;

/**
 * Per-trace scores of one log under one model.
 */
typedef struct DsScores DsScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next `ds_*` call on the same thread.
 */
const char *ds_last_error(void);

/**
 * Parses a CSV event log. `timestamp_column` may be null, in which case file
 * order is kept. Every other column is read as a categorical attribute.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out_log` must be writable.
 */
enum DsStatus ds_log_parse(const char *path,
                           const char *trace_id_column,
                           const char *timestamp_column,
                           struct DsLog **out_log);

/**
 * Parses a CSV event log with the schema a model was trained on.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum DsStatus ds_log_parse_for_model(const struct DsModel *model,
                                     const char *path,
                                     struct DsLog **out_log);

/**
 * Number of traces in the log, or 0 for a null handle.
 *
 * # Safety
 * `log` must be null or come from this library.
 */
size_t ds_log_trace_count(const struct DsLog *log);

/**
 * Number of events in the log, or 0 for a null handle.
 *
 * # Safety
 * `log` must be null or come from this library.
 */
size_t ds_log_event_count(const struct DsLog *log);

/**
 * # Safety
 * `log` must be null or an unfreed handle from this library.
 */
void ds_log_free(struct DsLog *log);

/**
 * Learns a model from the first traces of `log` that together hold at least
 * `train_events` events. `fd_threshold` in (0, 1] and `k_max` are the structure
 * search settings; pass 0 for either to use the defaults (0.99 and 2).
 *
 * # Safety
 * `log` must come from this library; `out_model` must be writable.
 */
enum DsStatus ds_model_learn(const struct DsLog *log,
                             size_t train_events,
                             double fd_threshold,
                             size_t k_max,
                             struct DsModel **out_model);

/**
 * Loads a model saved by [`ds_model_save`] or the command-line tool.
 *
 * # Safety
 * `path` must be NUL-terminated; `out_model` must be writable.
 */
enum DsStatus ds_model_load(const char *path, struct DsModel **out_model);

/**
 * Writes the model as JSON.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum DsStatus ds_model_save(const struct DsModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or an unfreed handle from this library.
 */
void ds_model_free(struct DsModel *model);

/**
 * Scores every trace of `log` under `model`.
 *
 * # Safety
 * Handles must come from this library; `out_scores` must be writable.
 */
enum DsStatus ds_score_log(const struct DsModel *model,
                           const struct DsLog *log,
                           struct DsScores **out_scores);

/**
 * Number of scored traces, or 0 for a null handle.
 *
 * # Safety
 * `scores` must be null or come from this library.
 */
size_t ds_scores_len(const struct DsScores *scores);

/**
 * Copies the per-trace mean scores into `buffer`. `capacity` must be at least
 * [`ds_scores_len`]; otherwise nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `buffer` must point to `capacity` writable doubles.
 */
enum DsStatus ds_scores_means(const struct DsScores *scores, double *buffer, size_t capacity);

/**
 * # Safety
 * `scores` must be null or an unfreed handle from this library.
 */
void ds_scores_free(struct DsScores *scores);

/**
 * Two-sample Kolmogorov–Smirnov test.
 *
 * # Safety
 * `a` and `b` must point to `n` and `m` doubles; outputs must be writable.
 */
enum DsStatus ds_ks_two_sample(const double *a,
                               size_t n,
                               const double *b,
                               size_t m,
                               double *out_d,
                               double *out_p);

/**
 * Runs the sliding-window test over a score series and reports drift points
 * as trace indices. `min_separation` of 0 means the window size. The number of
 * points is always stored in `out_count`; if it exceeds `capacity` nothing is
 * written to `out_indices` and `BufferTooSmall` is returned.
 *
 * # Safety
 * `means` must point to `len` doubles and `out_indices` to `capacity` slots.
 */
enum DsStatus ds_detect_drift(const double *means,
                              size_t len,
                              size_t window,
                              size_t step,
                              double threshold,
                              size_t min_separation,
                              size_t *out_indices,
                              size_t capacity,
                              size_t *out_count);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DRIFTSCOPE_H */
