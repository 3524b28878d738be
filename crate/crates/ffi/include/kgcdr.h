#ifndef KGCDR_H
#define KGCDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Rating domain: the denser source or the sparser target.
 */
typedef enum KgcdrDomain {
  KGCDR_DOMAIN_SOURCE = 0,
  KGCDR_DOMAIN_TARGET = 1,
} KgcdrDomain;

/**
 * Result code of every fallible call.
 */
typedef enum KgcdrStatus {
  KGCDR_STATUS_OK = 0,
  KGCDR_STATUS_NULL_POINTER = 1,
  KGCDR_STATUS_INVALID_ARGUMENT = 2,
  KGCDR_STATUS_SHAPE = 3,
  KGCDR_STATUS_PARSE = 4,
  KGCDR_STATUS_IO = 5,
  KGCDR_STATUS_DATA = 6,
  KGCDR_STATUS_EMPTY_GRAPH = 7,
  KGCDR_STATUS_CONFIG = 8,
  KGCDR_STATUS_TRAINING = 9,
  KGCDR_STATUS_LOOKUP = 10,
  KGCDR_STATUS_EVAL = 11,
  KGCDR_STATUS_PANIC = 12,
} KgcdrStatus;

/**
 * A loaded model of any kind.
 */
typedef struct KgcdrModel KgcdrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next kgcdr call on the same thread.
 */
const char *kgcdr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kgcdr_version(void);

/**
 * Opens a checkpoint written by the `train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 * On success `*out` receives a handle owned by the caller.
 */
enum KgcdrStatus kgcdr_model_open(const char *path, struct KgcdrModel **out);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from [`kgcdr_model_open`] not yet freed.
 */
void kgcdr_model_free(struct KgcdrModel *model);

/**
 * Predicted normalized rating in (0, 1).
 *
 * # Safety
 * `model` must be a live handle and `out` a writable pointer.
 */
enum KgcdrStatus kgcdr_model_predict(const struct KgcdrModel *model,
                                     size_t user,
                                     enum KgcdrDomain domain,
                                     size_t item,
                                     double *out);

/**
 * Predicts `n` (user, item) pairs of one domain. Nothing is written to
 * `out` unless every pair is valid.
 *
 * # Safety
 * `users` and `items` must point to `n` readable values and `out` to `n`
 * writable values.
 */
enum KgcdrStatus kgcdr_model_predict_batch(const struct KgcdrModel *model,
                                           enum KgcdrDomain domain,
                                           const size_t *users,
                                           const size_t *items,
                                           size_t n,
                                           double *out);

/**
 * Maps a 1-5 rating onto [0, 1].
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum KgcdrStatus kgcdr_normalize_rating(uint8_t raw, double *out);

/**
 * Mean absolute error in percent of normalized predictions against
 * normalized targets.
 *
 * # Safety
 * `predictions` and `targets` must point to `n` readable values.
 */
enum KgcdrStatus kgcdr_mae(const double *predictions, const double *targets, size_t n, double *out);

/**
 * F1 in percent of "prediction >= 0.75" against "raw rating >= 4".
 *
 * # Safety
 * `predictions` and `targets_raw` must point to `n` readable values.
 */
enum KgcdrStatus kgcdr_f1(const double *predictions,
                          const uint8_t *targets_raw,
                          size_t n,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGCDR_H */
