#ifndef CAET_H
#define CAET_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CaetStatus {
  CAET_STATUS_OK = 0,
  CAET_STATUS_NULL_POINTER = 1,
  CAET_STATUS_INVALID_UTF8 = 2,
  CAET_STATUS_CONFIG = 3,
  CAET_STATUS_DATA = 4,
  CAET_STATUS_IO = 5,
  CAET_STATUS_CHECKPOINT = 6,
  CAET_STATUS_NUMERIC = 7,
  CAET_STATUS_INTERNAL = 8,
} CaetStatus;

/**
 * A loaded transfer model. Opaque to C.
 */
typedef struct CaetModel CaetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *caet_last_error(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CaetStatus caet_model_load(const char *path, struct CaetModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`caet_model_load`] and not be used afterwards.
 */
void caet_model_free(struct CaetModel *model);

/**
 * Name of attribute `index` (0 or 1), or null. Owned by the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
const char *caet_model_attribute(const struct CaetModel *model, size_t index);

/**
 * Rewrites `text` into attribute `to`. On success `*out` holds a new string
 * to be released with [`caet_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `text` and `to` NUL-terminated; `out` writable.
 */
enum CaetStatus caet_transfer(const struct CaetModel *model,
                              const char *text,
                              const char *to,
                              char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void caet_string_free(char *s);

/**
 * Cube root of `acc * sim / ppl`; zero when `acc` or `sim` is not positive.
 *
 * # Safety
 * `out` must be writable.
 */
enum CaetStatus caet_geometric_mean(double acc, double ppl, double sim, double *out);

/**
 * Sentence BLEU (0-100) of `candidate` against `n_refs` references, on
 * lowercased words.
 *
 * # Safety
 * `candidate` and each of the `n_refs` entries of `refs` must be
 * NUL-terminated strings; `out` writable.
 */
enum CaetStatus caet_bleu(const char *candidate,
                          const char *const *refs,
                          size_t n_refs,
                          double *out);

/**
 * Library version as a static string.
 */
const char *caet_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAET_H */
