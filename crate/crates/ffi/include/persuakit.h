#ifndef PERSUAKIT_H
#define PERSUAKIT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum PkStatus {
  PK_STATUS_OK = 0,
  /**
   * A required pointer was null or a parameter was invalid.
   */
  PK_STATUS_INVALID_ARGUMENT = 1,
  /**
   * A document could not be parsed.
   */
  PK_STATUS_MALFORMED = 2,
  /**
   * Documents parsed but violate a contract (unknown labels, mismatched ids, ...).
   */
  PK_STATUS_VALIDATION = 3,
  /**
   * File system failure.
   */
  PK_STATUS_IO = 4,
  /**
   * External service failure.
   */
  PK_STATUS_SERVICE = 5,
  /**
   * Internal error; the library caught a panic.
   */
  PK_STATUS_INTERNAL = 6,
} PkStatus;

/**
 * Opaque label hierarchy handle.
 */
typedef struct PkHierarchy PkHierarchy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pk_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *pk_last_error_message(void);

/**
 * Releases a string returned through an `out_json` parameter. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void pk_string_free(char *s);

/**
 * Handle to the bundled persuasion taxonomy.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum PkStatus pk_hierarchy_default(struct PkHierarchy **out);

/**
 * Parses a hierarchy document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PkStatus pk_hierarchy_from_json(const char *json, struct PkHierarchy **out);

/**
 * Releases a hierarchy handle. Null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from this library that has not been freed.
 */
void pk_hierarchy_free(struct PkHierarchy *h);

/**
 * Number of leaf techniques, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t pk_hierarchy_leaf_count(const struct PkHierarchy *h);

/**
 * Hierarchical and per-class scores of two label files.
 *
 * # Safety
 * String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
 */
enum PkStatus pk_score(const struct PkHierarchy *h,
                       const char *gold_json,
                       const char *pred_json,
                       char **out_json);

/**
 * Tunes per-technique thresholds over the grid `lo..=hi` in steps of `step`.
 * Logit matrices are passed through the sigmoid first.
 *
 * # Safety
 * String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
 */
enum PkStatus pk_tune_thresholds(const struct PkHierarchy *h,
                                 const char *matrix_json,
                                 const char *gold_json,
                                 double lo,
                                 double hi,
                                 double step,
                                 char **out_json);

/**
 * Mean ensemble of a JSON array of prediction matrices.
 *
 * # Safety
 * String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
 */
enum PkStatus pk_ensemble(const struct PkHierarchy *h, const char *members_json, char **out_json);

/**
 * Ensembles the members and applies a threshold profile, producing a label file.
 *
 * # Safety
 * String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
 */
enum PkStatus pk_predict(const struct PkHierarchy *h,
                         const char *members_json,
                         const char *profile_json,
                         char **out_json);

/**
 * Builds an augmentation plan. `params_json` is an object with a `strategy`
 * key and the strategy's parameters: `n` for `para_n`; `benefit` (list of
 * techniques) and optional `m` (default 10) for `para_benef`; optional
 * `target` (default 1500) and `batch` (default 5) for `para_bal`.
 *
 * # Safety
 * String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
 */
enum PkStatus pk_plan_augment(const struct PkHierarchy *h,
                              const char *dataset_json,
                              const char *params_json,
                              char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERSUAKIT_H */
