#ifndef ULTRAMEDIAN_H
#define ULTRAMEDIAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the non-zero values shared with the CLI use its exit codes.
 */
typedef enum UmStatus {
  UM_STATUS_OK = 0,
  /**
   * Argument outside its domain, or a size cap exceeded.
   */
  UM_STATUS_DOMAIN = 2,
  /**
   * File system or serialization failure.
   */
  UM_STATUS_IO = 3,
  /**
   * Malformed input text or a space violating the metric axioms.
   */
  UM_STATUS_INVALID_INSTANCE = 4,
  UM_STATUS_ASSERTION = 5,
  /**
   * A required pointer argument was null.
   */
  UM_STATUS_NULL_ARGUMENT = 64,
  /**
   * A string argument was not valid UTF-8.
   */
  UM_STATUS_INVALID_UTF8 = 65,
  /**
   * A panic was caught at the boundary.
   */
  UM_STATUS_PANIC = 66,
  UM_STATUS_INTERNAL = 70,
} UmStatus;

typedef enum UmVerdict {
  UM_VERDICT_ULTRAMETRIC = 0,
  UM_VERDICT_METRIC_ONLY = 1,
  UM_VERDICT_INVALID = 2,
} UmVerdict;

typedef enum UmFallback {
  UM_FALLBACK_AUTO = 0,
  UM_FALLBACK_FORCE_SAMPLE = 1,
  UM_FALLBACK_FORCE_EXACT = 2,
} UmFallback;

typedef enum UmMode {
  UM_MODE_SAMPLED = 0,
  UM_MODE_EXACT_FALLBACK = 1,
} UmMode;

/**
 * Opaque handle to a finite space (distance matrix or dendrogram).
 */
typedef struct UmSpace UmSpace;

/**
 * Parameters of the sampling algorithm. Fill with [`um_params_default`].
 */
typedef struct UmParams {
  double epsilon;
  double c_h;
  double c_k;
  uint64_t seed;
  enum UmFallback fallback;
  /**
   * Run the sampler at `epsilon / 4`.
   */
  bool theorem;
} UmParams;

/**
 * Result of a median computation. Audit fields are NaN when no audit
 * was requested.
 */
typedef struct UmMedianReport {
  uint32_t selected;
  double sample_cost;
  double exact_cost;
  double opt_cost;
  double ratio;
  uint64_t queries_used;
  enum UmMode mode;
} UmMedianReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Writes the last error of the calling thread into `buf` as a
 * NUL-terminated string, truncated to `len` bytes. Returns the number of
 * bytes needed including the terminator; 1 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t um_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *um_version(void);

/**
 * Builds a space from a row-major `n * n` distance matrix.
 *
 * # Safety
 * `data` must point to `n * n` readable doubles; `out_space` must be writable.
 */
enum UmStatus um_space_from_matrix(const double *data, size_t n, struct UmSpace **out_space);

/**
 * Loads a matrix or dendrogram file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_space` must be writable.
 */
enum UmStatus um_space_load(const char *path, struct UmSpace **out_space);

/**
 * Generates an instance from a spec such as `k-level:n=64,k=3,seed=1`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out_space` must be writable.
 */
enum UmStatus um_space_generate(const char *spec, struct UmSpace **out_space);

/**
 * Releases a space. Null is ignored.
 *
 * # Safety
 * `space` must be null or a handle returned by this library, not yet freed.
 */
void um_space_free(struct UmSpace *space);

/**
 * Number of points in the space; 0 for a null handle.
 *
 * # Safety
 * `space` must be null or a live handle.
 */
size_t um_space_len(const struct UmSpace *space);

/**
 * Distance between points `a` and `b` (1-based).
 *
 * # Safety
 * `space` must be a live handle; `out_distance` must be writable.
 */
enum UmStatus um_space_distance(const struct UmSpace *space,
                                uint32_t a,
                                uint32_t b,
                                double *out_distance);

/**
 * Checks the metric and ultrametric axioms.
 *
 * # Safety
 * `space` must be a live handle; `out_verdict` must be writable.
 */
enum UmStatus um_validate(const struct UmSpace *space,
                          bool allow_pseudo,
                          enum UmVerdict *out_verdict);

/**
 * Exact 1-median by exhaustive search (lowest id among ties).
 *
 * # Safety
 * `space` must be a live handle; `out_selected` and `out_cost` must be writable.
 */
enum UmStatus um_brute_force_median(const struct UmSpace *space,
                                    uint32_t *out_selected,
                                    double *out_cost);

/**
 * Writes the default parameters.
 *
 * # Safety
 * `out_params` must be writable.
 */
enum UmStatus um_params_default(struct UmParams *out_params);

/**
 * Candidate and evaluator sample sizes for the given parameters.
 *
 * # Safety
 * `out_h` and `out_k` must be writable.
 */
enum UmStatus um_params_hk(double epsilon,
                           double c_h,
                           double c_k,
                           uint64_t *out_h,
                           uint64_t *out_k);

/**
 * Approximate 1-median. With `audit` the exact cost, optimum and ratio
 * are filled in at O(n^2) extra reads, which are not counted in
 * `queries_used`.
 *
 * # Safety
 * `space` and `params` must be valid; `out_report` must be writable.
 */
enum UmStatus um_approx_median(const struct UmSpace *space,
                               const struct UmParams *params,
                               bool audit,
                               struct UmMedianReport *out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ULTRAMEDIAN_H */
