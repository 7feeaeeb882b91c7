#ifndef OCRP_H
#define OCRP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum OcrpStatus {
  OCRP_STATUS_OK = 0,
  OCRP_STATUS_NULL_POINTER = 1,
  OCRP_STATUS_INVALID_PARAMETER = 2,
  OCRP_STATUS_BUFFER_TOO_SMALL = 3,
  OCRP_STATUS_INDEX_OUT_OF_RANGE = 4,
  OCRP_STATUS_BUDGET_EXCEEDED = 5,
  OCRP_STATUS_EMPTY_COMPOSITION = 6,
  OCRP_STATUS_INTERNAL = 7,
  OCRP_STATUS_PANIC = 8,
} OcrpStatus;

/**
 * Finite composition.
 */
typedef struct OcrpComposition OcrpComposition;

/**
 * Probability table over compositions, in lexicographic order.
 */
typedef struct OcrpExactLaw OcrpExactLaw;

/**
 * Interval partition of a finite mass.
 */
typedef struct OcrpPartition OcrpPartition;

/**
 * Deterministic random stream.
 */
typedef struct OcrpRng OcrpRng;

/**
 * Seating parameters passed by value.
 */
typedef struct OcrpParams {
  double alpha;
  double theta1;
  double theta2;
} OcrpParams;

/**
 * Message of the last failed call on this thread, or null when the last
 * call succeeded. The string stays valid until the next call on this
 * thread.
 */
const char *ocrp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ocrp_version(void);

/**
 * Creates the random stream `index` under key `seed`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OcrpStatus ocrp_rng_new(uint64_t seed, uint64_t index, struct OcrpRng **out);

/**
 * Releases a stream. Null is ignored.
 *
 * # Safety
 * `rng` must be null or a handle from [`ocrp_rng_new`] not yet freed.
 */
void ocrp_rng_free(struct OcrpRng *rng);

/**
 * Probability that the first block of a regenerative composition of `n`
 * has size `m`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OcrpStatus ocrp_decrement(uint64_t n, uint64_t m, double theta2, double alpha, double *out);

/**
 * Builds a composition from `len` positive part sizes.
 *
 * # Safety
 * `parts` must point to `len` readable values (it may be null when `len`
 * is 0) and `out` must be valid for writes.
 */
enum OcrpStatus ocrp_composition_new(const uint64_t *parts,
                                     size_t len,
                                     struct OcrpComposition **out);

/**
 * Number of parts.
 *
 * # Safety
 * `c` must be a live composition handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_composition_len(const struct OcrpComposition *c, size_t *out);

/**
 * Copies the parts into `buf`. Fails with `BUFFER_TOO_SMALL` when `cap`
 * is less than the number of parts; `*len` is set either way.
 *
 * # Safety
 * `c` must be a live composition handle, `buf` writable for `cap` values
 * (it may be null when `cap` is 0), and `len` valid for writes.
 */
enum OcrpStatus ocrp_composition_parts(const struct OcrpComposition *c,
                                       uint64_t *buf,
                                       size_t cap,
                                       size_t *len);

/**
 * Releases a composition. Null is ignored.
 *
 * # Safety
 * `c` must be null or a composition handle not yet freed.
 */
void ocrp_composition_free(struct OcrpComposition *c);

/**
 * Seats `n` customers by the seating rule.
 *
 * # Safety
 * `rng` must be a live stream handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_sample_ocrp(uint64_t n,
                                 struct OcrpParams p,
                                 struct OcrpRng *rng,
                                 struct OcrpComposition **out);

/**
 * State at time `t` of the up-down restaurant started from `start`.
 *
 * # Safety
 * `start` and `rng` must be live handles and `out` valid for writes.
 */
enum OcrpStatus ocrp_pcrp_marginal(const struct OcrpComposition *start,
                                   struct OcrpParams p,
                                   double t,
                                   struct OcrpRng *rng,
                                   struct OcrpComposition **out);

/**
 * Exact law of the composition of `n` customers, `n <= 9`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OcrpStatus ocrp_exact_law_new(uint64_t n, struct OcrpParams p, struct OcrpExactLaw **out);

/**
 * Number of compositions in the table.
 *
 * # Safety
 * `law` must be a live handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_exact_law_len(const struct OcrpExactLaw *law, size_t *out);

/**
 * Entry `index`: copies its parts into `buf` (see
 * [`ocrp_composition_parts`] for the buffer contract) and writes its
 * probability to `prob`.
 *
 * # Safety
 * `law` must be a live handle, `buf` writable for `cap` values, and
 * `len` and `prob` valid for writes.
 */
enum OcrpStatus ocrp_exact_law_entry(const struct OcrpExactLaw *law,
                                     size_t index,
                                     uint64_t *buf,
                                     size_t cap,
                                     size_t *len,
                                     double *prob);

/**
 * Releases a law. Null is ignored.
 *
 * # Safety
 * `law` must be null or a law handle not yet freed.
 */
void ocrp_exact_law_free(struct OcrpExactLaw *law);

/**
 * Unit-mass interval partition from a restaurant of `resolution`
 * customers.
 *
 * # Safety
 * `rng` must be a live stream handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_sample_pdip(struct OcrpParams p,
                                 uint64_t resolution,
                                 struct OcrpRng *rng,
                                 struct OcrpPartition **out);

/**
 * Number of blocks.
 *
 * # Safety
 * `ip` must be a live handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_partition_len(const struct OcrpPartition *ip, size_t *out);

/**
 * Copies blocks as `left, right` pairs into `buf`, which holds `cap`
 * pairs (`2 * cap` doubles). `*len` receives the number of blocks.
 *
 * # Safety
 * `ip` must be a live handle, `buf` writable for `2 * cap` doubles, and
 * `len` valid for writes.
 */
enum OcrpStatus ocrp_partition_blocks(const struct OcrpPartition *ip,
                                      double *buf,
                                      size_t cap,
                                      size_t *len);

/**
 * Total mass of the partition.
 *
 * # Safety
 * `ip` must be a live handle and `out` valid for writes.
 */
enum OcrpStatus ocrp_partition_mass(const struct OcrpPartition *ip, double *out);

/**
 * Releases a partition. Null is ignored.
 *
 * # Safety
 * `ip` must be null or a partition handle not yet freed.
 */
void ocrp_partition_free(struct OcrpPartition *ip);

#endif  /* OCRP_H */
