#ifndef DTSBENCH_H
#define DTSBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define DTS_VARIANT_MASK_DTS (1 << 0)

#define DTS_VARIANT_MASK_DTS_PLUS (1 << 1)

#define DTS_VARIANT_MASK_PURE_DTS (1 << 2)

#define DTS_VARIANT_MASK_RANDOM (1 << 3)

#define DTS_VARIANT_MASK_ALL 15

/**
 * Pass to `dts_policy_update` when the selected pair was a self-comparison.
 */
#define DTS_NO_WINNER -1

typedef enum DtsStatus {
  DTS_STATUS_OK = 0,
  DTS_STATUS_NULL_POINTER = 1,
  DTS_STATUS_INVALID_ARGUMENT = 2,
  DTS_STATUS_UNKNOWN_DATASET = 3,
  DTS_STATUS_IO = 4,
  DTS_STATUS_PARSE = 5,
  DTS_STATUS_INVALID_MATRIX = 6,
  DTS_STATUS_OUT_OF_RANGE = 7,
  /**
   * `dts_policy_update` without a pending `dts_policy_select`.
   */
  DTS_STATUS_NO_PENDING_PAIR = 8,
  DTS_STATUS_RUNTIME = 9,
  DTS_STATUS_PANIC = 10,
} DtsStatus;

typedef enum DtsVariant {
  DTS_VARIANT_DTS = 0,
  DTS_VARIANT_DTS_PLUS = 1,
  DTS_VARIANT_PURE_DTS = 2,
  DTS_VARIANT_RANDOM = 3,
} DtsVariant;

/**
 * Opaque preference matrix.
 */
typedef struct DtsMatrix DtsMatrix;

/**
 * Opaque D-TS policy plus its last selected pair.
 */
typedef struct DtsPolicy DtsPolicy;

typedef struct DtsExperimentOptions {
  uint64_t horizon;
  uint64_t runs;
  double alpha;
  uint64_t seed;
  /**
   * Feedback batch period; 1 means immediate feedback.
   */
  uint64_t delay;
  bool shuffle;
  /**
   * Worker threads; 0 uses the available parallelism.
   */
  uint64_t jobs;
  /**
   * Bitwise OR of `DTS_VARIANT_MASK_*`.
   */
  uint32_t variants;
} DtsExperimentOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a
 * successful one. Valid until the next call into this library on the
 * same thread.
 */
const char *dts_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dts_version(void);

/**
 * Number of built-in datasets.
 */
size_t dts_dataset_count(void);

/**
 * Static name of built-in dataset `index`, or NULL when out of range.
 */
const char *dts_dataset_name(size_t index);

/**
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DtsStatus dts_matrix_builtin(const char *name, struct DtsMatrix **out);

/**
 * Builds a matrix from `k * k` row-major probabilities.
 *
 * # Safety
 * `data` must point to `k * k` readable doubles, `name` must be NULL or a
 * NUL-terminated string, and `out` must be writable.
 */
enum DtsStatus dts_matrix_from_rows(const char *name,
                                    size_t k,
                                    const double *data,
                                    struct DtsMatrix **out);

/**
 * Reads a `.json` or `.csv` matrix file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DtsStatus dts_matrix_load(const char *path, struct DtsMatrix **out);

/**
 * # Safety
 * `m` must be NULL or a handle from a `dts_matrix_*` constructor that has
 * not been freed yet.
 */
void dts_matrix_free(struct DtsMatrix *m);

/**
 * Arm count, or 0 for a NULL handle.
 *
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t dts_matrix_k(const struct DtsMatrix *m);

/**
 * # Safety
 * `m` must be a live matrix handle and `out` writable.
 */
enum DtsStatus dts_matrix_get(const struct DtsMatrix *m, size_t i, size_t j, double *out);

/**
 * Writes the `k` Copeland scores to `zeta` and the top score to
 * `zeta_star`. Either output may be NULL.
 *
 * # Safety
 * `m` must be a live matrix handle; `zeta`, when non-NULL, must hold `k`
 * writable doubles.
 */
enum DtsStatus dts_matrix_copeland(const struct DtsMatrix *m, double *zeta, double *zeta_star);

/**
 * Writes 1 to `winners[i]` for every Copeland winner and 0 otherwise;
 * returns the winner count through `count` (may be NULL).
 *
 * # Safety
 * `m` must be a live matrix handle and `winners` must hold `k` writable bytes.
 */
enum DtsStatus dts_matrix_winners(const struct DtsMatrix *m, uint8_t *winners, size_t *count);

/**
 * Regret of comparing `first` with `second`.
 *
 * # Safety
 * `m` must be a live matrix handle and `out` writable.
 */
enum DtsStatus dts_matrix_regret(const struct DtsMatrix *m,
                                 size_t first,
                                 size_t second,
                                 double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum DtsStatus dts_policy_new(size_t k,
                              enum DtsVariant variant,
                              double alpha,
                              uint64_t seed,
                              struct DtsPolicy **out);

/**
 * # Safety
 * `p` must be NULL or a live policy handle.
 */
void dts_policy_free(struct DtsPolicy *p);

/**
 * Chooses the next pair. Each select must be followed by exactly one
 * `dts_policy_update`; selecting again replaces the pending pair.
 *
 * # Safety
 * `p` must be a live policy handle; `first` and `second` writable.
 */
enum DtsStatus dts_policy_select(struct DtsPolicy *p, size_t *first, size_t *second);

/**
 * Reports the outcome of the pending pair and advances the slot counter.
 * `winner` is one of the two arms, or `DTS_NO_WINNER` for a
 * self-comparison.
 *
 * # Safety
 * `p` must be a live policy handle.
 */
enum DtsStatus dts_policy_update(struct DtsPolicy *p, int64_t winner);

/**
 * Current slot `t` (1 before the first update), or 0 for NULL.
 *
 * # Safety
 * `p` must be NULL or a live policy handle.
 */
uint64_t dts_policy_slot(const struct DtsPolicy *p);

/**
 * Times arm `i` has beaten arm `j`.
 *
 * # Safety
 * `p` must be a live policy handle and `out` writable.
 */
enum DtsStatus dts_policy_wins(const struct DtsPolicy *p, size_t i, size_t j, uint64_t *out);

/**
 * Defaults matching the command line: T = 10000, 100 runs, alpha 0.51,
 * seed 0, immediate feedback, shuffling on, all variants.
 */
struct DtsExperimentOptions dts_experiment_default_options(void);

/**
 * Runs an experiment on a built-in dataset or matrix file and writes
 * curves.csv, summary.csv and diversity.csv into `out_dir`.
 *
 * # Safety
 * `dataset` and `out_dir` must be NUL-terminated strings and `options`
 * must point to a readable options struct.
 */
enum DtsStatus dts_run_experiment(const char *dataset,
                                  const struct DtsExperimentOptions *options,
                                  const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTSBENCH_H */
