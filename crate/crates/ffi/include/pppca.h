#ifndef PPPCA_H
#define PPPCA_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PppcaMethod {
  PPPCA_METHOD_HE = 0,
  PPPCA_METHOD_SS = 1,
} PppcaMethod;

typedef enum PppcaStatus {
  PPPCA_STATUS_OK = 0,
  PPPCA_STATUS_NULL_POINTER = 1,
  PPPCA_STATUS_INVALID_ARGUMENT = 2,
  PPPCA_STATUS_DATA_ERROR = 3,
  PPPCA_STATUS_PROTOCOL_ERROR = 4,
  PPPCA_STATUS_WIRE_ERROR = 5,
  PPPCA_STATUS_PANIC = 6,
} PppcaStatus;

/**
 * Row-major matrix of finite doubles.
 */
typedef struct PppcaMatrix PppcaMatrix;

/**
 * Result of a session. Matrices obtained from it are borrowed and live as
 * long as the outcome.
 */
typedef struct PppcaOutcome PppcaOutcome;

/**
 * Session settings. The party count is the number of partitions passed
 * to [`pppca_run`].
 */
typedef struct PppcaSessionOptions {
  enum PppcaMethod method;
  size_t k;
  uint32_t key_bits;
  /**
   * Nonzero admits 512-bit keys.
   */
  uint8_t test_keys;
  /**
   * Nonzero makes the run reproducible from `seed`.
   */
  uint8_t has_seed;
  uint64_t seed;
} PppcaSessionOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *pppca_last_error(void);

/**
 * Fills `out` with the library defaults: HE, k = 2, 2048-bit keys, OS
 * randomness.
 *
 * # Safety
 * `out` must be NULL or point to writable memory for one options struct.
 */
enum PppcaStatus pppca_session_options_default(struct PppcaSessionOptions *out);

/**
 * Copies `rows * cols` doubles from `data` into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles and `out` to a
 * writable handle slot.
 */
enum PppcaStatus pppca_matrix_new(size_t rows,
                                  size_t cols,
                                  const double *data,
                                  struct PppcaMatrix **out);

/**
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t pppca_matrix_rows(const struct PppcaMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a live matrix handle.
 */
size_t pppca_matrix_cols(const struct PppcaMatrix *m);

/**
 * Copies the entries in row-major order into `out`, which holds `len`
 * doubles; `len` must equal rows * cols.
 *
 * # Safety
 * `m` must be a live matrix handle and `out` must point to `len` writable
 * doubles.
 */
enum PppcaStatus pppca_matrix_copy(const struct PppcaMatrix *m, double *out, size_t len);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that was not freed and is
 * not owned by an outcome.
 */
void pppca_matrix_free(struct PppcaMatrix *m);

/**
 * Plaintext PCA of pooled rows: writes the d x k transfer matrix and the
 * n x k reduced rows.
 *
 * # Safety
 * `x` must be a live matrix handle; `transfer` and `reduced` must be
 * writable handle slots.
 */
enum PppcaStatus pppca_centralized_pca(const struct PppcaMatrix *x,
                                       size_t k,
                                       struct PppcaMatrix **transfer,
                                       struct PppcaMatrix **reduced);

/**
 * Runs a full simulated session with one provider per partition.
 *
 * # Safety
 * `opts` must point to valid options, `parts` to `n_parts` live matrix
 * handles, and `out` to a writable handle slot.
 */
enum PppcaStatus pppca_run(const struct PppcaSessionOptions *opts,
                           const struct PppcaMatrix *const *parts,
                           size_t n_parts,
                           struct PppcaOutcome **out);

/**
 * Reduced rows stacked in provider order; borrowed from `o`.
 *
 * # Safety
 * `o` must be NULL or a live outcome handle.
 */
const struct PppcaMatrix *pppca_outcome_reduced(const struct PppcaOutcome *o);

/**
 * # Safety
 * `o` must be NULL or a live outcome handle.
 */
const struct PppcaMatrix *pppca_outcome_transfer(const struct PppcaOutcome *o);

/**
 * # Safety
 * `o` must be NULL or a live outcome handle.
 */
const struct PppcaMatrix *pppca_outcome_covariance(const struct PppcaOutcome *o);

/**
 * Number of messages exchanged during the session.
 *
 * # Safety
 * `o` must be NULL or a live outcome handle.
 */
size_t pppca_outcome_message_count(const struct PppcaOutcome *o);

/**
 * # Safety
 * `o` must be NULL or a handle from [`pppca_run`] that was not freed.
 */
void pppca_outcome_free(struct PppcaOutcome *o);

/**
 * Checks that `bytes` hold exactly one well-formed protocol frame.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes.
 */
enum PppcaStatus pppca_frame_validate(const uint8_t *bytes, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPPCA_H */
