#ifndef METANER_H
#define METANER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MetanerMode {
  METANER_MODE_DIRECT = 0,
  METANER_MODE_ADAPT = 1,
} MetanerMode;

typedef enum MetanerStatus {
  METANER_STATUS_OK = 0,
  /**
   * Bad configuration or arguments.
   */
  METANER_STATUS_CONFIG = 1,
  /**
   * Unreadable or malformed files.
   */
  METANER_STATUS_DATA = 2,
  /**
   * Non-finite values during computation.
   */
  METANER_STATUS_NUMERICAL = 3,
  METANER_STATUS_NULL_POINTER = 4,
  METANER_STATUS_INVALID_UTF8 = 5,
  /**
   * Caller buffer too small; the required size is reported.
   */
  METANER_STATUS_BUFFER_TOO_SMALL = 6,
  METANER_STATUS_PANIC = 7,
} MetanerStatus;

/**
 * Opaque handle to a loaded run.
 */
typedef struct MetanerModel MetanerModel;

/**
 * Overall phrase-level score.
 */
typedef struct MetanerScore {
  size_t gold;
  size_t predicted;
  size_t correct;
  double precision;
  double recall;
  double f1;
} MetanerScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *metaner_last_error(void);

/**
 * Loads the run directory written by `metaner meta-train`.
 *
 * # Safety
 * `run_dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum MetanerStatus metaner_model_load(const char *run_dir, struct MetanerModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`metaner_model_load`] not yet freed.
 */
void metaner_model_free(struct MetanerModel *model);

/**
 * Number of labels; label ids run from 0 to this count minus one.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum MetanerStatus metaner_model_label_count(const struct MetanerModel *model, size_t *out);

/**
 * Copies the NUL-terminated name of label `id` into `buf`. `required`, if
 * not null, receives the needed size including the terminator.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `buf_len` bytes.
 */
enum MetanerStatus metaner_model_label_name(const struct MetanerModel *model,
                                            size_t id,
                                            char *buf,
                                            size_t buf_len,
                                            size_t *required);

/**
 * Tags one tokenized sentence, writing one label id per token to
 * `out_labels`. `seed` keys the dropout of the adaptation step.
 *
 * # Safety
 * `tokens` must point to `n_tokens` NUL-terminated strings and
 * `out_labels` to `n_tokens` writable slots.
 */
enum MetanerStatus metaner_model_predict(const struct MetanerModel *model,
                                         const char *const *tokens,
                                         size_t n_tokens,
                                         enum MetanerMode mode,
                                         uint64_t seed,
                                         size_t *out_labels);

/**
 * Scores a file whose last two columns are gold and predicted tags.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum MetanerStatus metaner_score_prediction_file(const char *path, struct MetanerScore *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METANER_H */
