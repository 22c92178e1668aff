#ifndef BESSEL_FIELD_H
#define BESSEL_FIELD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BflKernelKind {
  BFL_KERNEL_KIND_FINITE_RAW = 0,
  BFL_KERNEL_KIND_FINITE_GAUGED = 1,
  BFL_KERNEL_KIND_BESSEL_LIMIT = 2,
} BflKernelKind;

typedef enum BflOrdering {
  BFL_ORDERING_TIME_LIKE = 0,
  BFL_ORDERING_SPACE_LIKE = 1,
} BflOrdering;

/**
 * Status codes returned by every fallible call.
 */
typedef enum BflStatus {
  BFL_STATUS_OK = 0,
  BFL_STATUS_NULL_POINTER = 1,
  BFL_STATUS_INVALID_ARGUMENT = 2,
  BFL_STATUS_RANGE = 3,
  BFL_STATUS_ORDERING = 4,
  BFL_STATUS_DOMAIN = 5,
  BFL_STATUS_INDEX = 6,
  BFL_STATUS_SIMULATION = 7,
  BFL_STATUS_STARVATION = 8,
  BFL_STATUS_PRECONDITION = 9,
  BFL_STATUS_PANIC = 10,
} BflStatus;

/**
 * Opaque kernel handle.
 */
typedef struct BflKernel BflKernel;

/**
 * Opaque field sample handle.
 */
typedef struct BflSample BflSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *bfl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bfl_version(void);

/**
 * Build a kernel on the path (alphas[i], times[i]), i < len. `n` is ignored
 * for the Bessel limit kernel.
 *
 * # Safety
 * `alphas` and `times` must point to `len` values; `out` must be writable.
 */
enum BflStatus bfl_kernel_new(enum BflKernelKind kind,
                              enum BflOrdering ordering,
                              uintptr_t n,
                              const uint32_t *alphas,
                              const double *times,
                              uintptr_t len,
                              struct BflKernel **out);

/**
 * # Safety
 * `kernel` must come from `bfl_kernel_new` and not be freed twice. Null is a no-op.
 */
void bfl_kernel_free(struct BflKernel *kernel);

/**
 * K(p_i, x; p_j, y). `tail_warning` (optional) receives 1 when a truncated
 * integral did not meet its tolerance.
 *
 * # Safety
 * `kernel` must be a live handle; `value` must be writable; `tail_warning`
 * may be null.
 */
enum BflStatus bfl_kernel_eval(const struct BflKernel *kernel,
                               uintptr_t i,
                               double x,
                               uintptr_t j,
                               double y,
                               double *value,
                               int32_t *tail_warning);

/**
 * det(I − K) on the union of [lowers[m], uppers[m]] at path index
 * path_indices[m], with `order` Gauss–Legendre nodes per interval.
 *
 * # Safety
 * The three arrays must hold `count` values; `kernel` must be live; `out`
 * must be writable.
 */
enum BflStatus bfl_gap_probability(const struct BflKernel *kernel,
                                   const uintptr_t *path_indices,
                                   const double *lowers,
                                   const double *uppers,
                                   uintptr_t count,
                                   uintptr_t order,
                                   double *out);

/**
 * Sample the field at absolute times on the (alphas × times) grid.
 *
 * # Safety
 * `alphas` must hold `n_alphas` values, `times` `n_times` values; `out`
 * must be writable.
 */
enum BflStatus bfl_sample_new(uintptr_t n,
                              const uint32_t *alphas,
                              uintptr_t n_alphas,
                              const double *times,
                              uintptr_t n_times,
                              uint64_t seed,
                              uint64_t stream,
                              struct BflSample **out);

/**
 * # Safety
 * `sample` must come from `bfl_sample_new` and not be freed twice. Null is a no-op.
 */
void bfl_sample_free(struct BflSample *sample);

/**
 * Copy the N ascending eigenvalues at grid position (alpha_index,
 * time_index) into `buf`, which must have room for `len` ≥ N values.
 *
 * # Safety
 * `sample` must be live and `buf` must be writable for `len` values.
 */
enum BflStatus bfl_sample_eigenvalues(const struct BflSample *sample,
                                      uintptr_t alpha_index,
                                      uintptr_t time_index,
                                      double *buf,
                                      uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BESSEL_FIELD_H */
