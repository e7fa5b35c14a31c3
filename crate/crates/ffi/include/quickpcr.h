#ifndef QUICKPCR_H
#define QUICKPCR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Ridge solver backing a [`QpOracle`].
 */
typedef enum QpOracleKind {
  /**
   * Conjugate gradient to relative solution error `eps`.
   */
  QP_ORACLE_KIND_CG = 0,
  /**
   * Tight solve plus uniform noise `10^-param`; `param < 0` adds none.
   */
  QP_ORACLE_KIND_NOISY = 1,
  /**
   * SVRG with `param` passes and declared accuracy `eps`.
   */
  QP_ORACLE_KIND_SVRG = 2,
} QpOracleKind;

/**
 * Result of every fallible call.
 */
typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_ARGUMENT = 2,
  QP_STATUS_IO = 3,
  QP_STATUS_FORMAT = 4,
  QP_STATUS_NOT_CONVERGED = 5,
  QP_STATUS_PANIC = 7,
} QpStatus;

/**
 * Data matrix `A` (scaled so `||A|| <= 1`) and response `b`.
 */
typedef struct QpDataset QpDataset;

/**
 * Seeded ridge oracle over a dataset's matrix. Holds its own reference to the
 * matrix, so the dataset may be freed first.
 */
typedef struct QpOracle QpOracle;

/**
 * Sign-approximating polynomial.
 */
typedef struct QpSignPoly QpSignPoly;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length in bytes,
 * excluding the terminator; pass a null `buf` to query it.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t qp_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *qp_version(void);

/**
 * Generates a synthetic dataset with `d_prime` rows, `d` (even) columns and
 * relative eigengap `a` around `sqrt(lambda)`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum QpStatus qp_dataset_generate(size_t d_prime,
                                  size_t d,
                                  double a,
                                  double lambda,
                                  double noise_scale,
                                  uint64_t seed,
                                  struct QpDataset **out);

/**
 * Loads a dataset bundle directory written by `quickpcr gen`. With `scale`
 * nonzero the matrix is rescaled to spectral norm at most 1.
 *
 * # Safety
 * `dir` must be a NUL-terminated UTF-8 path; `out` valid for one write.
 */
enum QpStatus qp_dataset_load(const char *dir, int32_t scale, struct QpDataset **out);

/**
 * Wraps a row-major `rows x cols` matrix and a length-`rows` response. The
 * matrix must already satisfy `||A|| <= 1` unless `scale` is nonzero.
 *
 * # Safety
 * `a` must hold `rows * cols` doubles, `b` `rows` doubles; `out` valid for one write.
 */
enum QpStatus qp_dataset_from_arrays(size_t rows,
                                     size_t cols,
                                     const double *a,
                                     const double *b,
                                     int32_t scale,
                                     struct QpDataset **out);

/**
 * Writes the matrix dimensions.
 *
 * # Safety
 * `ds` must be a live dataset handle; `rows` and `cols` valid for writes.
 */
enum QpStatus qp_dataset_dims(const struct QpDataset *ds, size_t *rows, size_t *cols);

/**
 * Copies `b` (length `rows`) into `out`.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` valid for `len` doubles.
 */
enum QpStatus qp_dataset_response(const struct QpDataset *ds, double *out, size_t len);

/**
 * Writes `A^T v` (length `cols`) for `v` of length `rows`.
 *
 * # Safety
 * `ds` must be a live dataset handle; buffers valid for their lengths.
 */
enum QpStatus qp_dataset_apply_t(const struct QpDataset *ds,
                                 const double *v,
                                 size_t v_len,
                                 double *out,
                                 size_t out_len);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void qp_dataset_free(struct QpDataset *ds);

/**
 * Creates a ridge oracle for `(A^T A + lambda I)^{-1}`. `param` is the noise
 * exponent for [`QpOracleKind::Noisy`] (negative for none) or the pass count
 * for [`QpOracleKind::Svrg`]; `eps` is the CG accuracy or SVRG's declared
 * accuracy.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` valid for one write.
 */
enum QpStatus qp_oracle_new(const struct QpDataset *ds,
                            double lambda,
                            enum QpOracleKind kind,
                            int64_t param,
                            double eps,
                            uint64_t seed,
                            struct QpOracle **out);

/**
 * Number of ridge solves made so far.
 *
 * # Safety
 * `oracle` must be a live oracle handle.
 */
size_t qp_oracle_calls(const struct QpOracle *oracle);

/**
 * Declared relative accuracy of each solve.
 *
 * # Safety
 * `oracle` must be a live oracle handle.
 */
double qp_oracle_eps(const struct QpOracle *oracle);

/**
 * One ridge solve: `out = (A^T A + lambda I)^{-1} u`, both of length `cols`.
 *
 * # Safety
 * `oracle` must be a live oracle handle; buffers valid for `len` doubles.
 */
enum QpStatus qp_oracle_solve(struct QpOracle *oracle, const double *u, double *out, size_t len);

/**
 * # Safety
 * `oracle` must be null or a handle not yet freed.
 */
void qp_oracle_free(struct QpOracle *oracle);

/**
 * Projects `chi` onto the eigenvectors of `A^T A` with eigenvalue above about
 * the oracle's `lambda`, using a degree-`n` polynomial (`2n + 1` ridge calls)
 * with eigengap `gamma`. `chi` and `out` have length `cols`.
 *
 * # Safety
 * `oracle` must be a live oracle handle; buffers valid for `len` doubles.
 */
enum QpStatus qp_quick_pcp(struct QpOracle *oracle,
                           double gamma,
                           size_t n,
                           const double *chi,
                           double *out,
                           size_t len);

/**
 * Principal component regression of `b` (length `rows`) into `x_out`
 * (length `cols`): degree `n`, `m` reduction steps, `2n + m + 2` ridge calls.
 *
 * # Safety
 * `oracle` must be a live oracle handle; buffers valid for their lengths.
 */
enum QpStatus qp_quick_pcr(struct QpOracle *oracle,
                           double gamma,
                           size_t n,
                           size_t m,
                           const double *b,
                           size_t b_len,
                           double *x_out,
                           size_t x_len);

/**
 * Builds a polynomial within `eps` of `sgn(x)` on `[-1, -alpha] U [alpha, 1]`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum QpStatus qp_sign_poly_new(double alpha, double eps, struct QpSignPoly **out);

/**
 * Evaluates the polynomial; NaN for a null handle.
 *
 * # Safety
 * `p` must be null or a live sign-polynomial handle.
 */
double qp_sign_poly_eval(const struct QpSignPoly *p, double x);

/**
 * Total degree `2 deg(q) + 1`; 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live sign-polynomial handle.
 */
size_t qp_sign_poly_degree(const struct QpSignPoly *p);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void qp_sign_poly_free(struct QpSignPoly *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUICKPCR_H */
