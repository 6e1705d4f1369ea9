#ifndef GPH_H
#define GPH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; `GPH_STATUS_OK` is zero.
 */
typedef enum GphStatus {
  GPH_STATUS_OK = 0,
  GPH_STATUS_NULL_POINTER = 1,
  GPH_STATUS_INVALID_ARGUMENT = 2,
  GPH_STATUS_PARSE_ERROR = 3,
  GPH_STATUS_NUMERICAL = 4,
  GPH_STATUS_TOO_LARGE = 5,
  GPH_STATUS_INTERNAL = 6,
} GphStatus;

/**
 * Hierarchy operator expression in canonical form.
 */
typedef struct GphExpr GphExpr;

/**
 * Periodic grid on `[-L, L)`.
 */
typedef struct GphGrid GphGrid;

/**
 * Complex samples on a grid.
 */
typedef struct GphWave GphWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library.
 */
const char *gph_last_error_message(void);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum GphStatus gph_grid_new(size_t n_points, double half_length, struct GphGrid **out);

/**
 * # Safety
 * `grid` must be null or a handle from [`gph_grid_new`].
 */
void gph_grid_free(struct GphGrid *grid);

/**
 * Build a wave from `len` real parts and, unless `im` is null, imaginary parts.
 *
 * # Safety
 * `re` (and `im` if non-null) must hold `len` doubles.
 */
enum GphStatus gph_wave_from_samples(const struct GphGrid *grid,
                                     const double *re,
                                     const double *im,
                                     size_t len,
                                     struct GphWave **out);

/**
 * `eta sech(eta (x - x0)) exp(i v x / 2)`.
 *
 * # Safety
 * `grid` must be a live handle and `out` a valid pointer.
 */
enum GphStatus gph_wave_soliton(const struct GphGrid *grid,
                                double eta,
                                double velocity,
                                double x0,
                                struct GphWave **out);

/**
 * `a exp(-(x - x0)^2 / (2 w^2)) exp(i v x / 2)`.
 *
 * # Safety
 * `grid` must be a live handle and `out` a valid pointer.
 */
enum GphStatus gph_wave_gaussian(const struct GphGrid *grid,
                                 double amplitude,
                                 double width,
                                 double velocity,
                                 double x0,
                                 struct GphWave **out);

/**
 * Unit-L2 copy of `wave`.
 *
 * # Safety
 * `wave` must be a live handle and `out` a valid pointer.
 */
enum GphStatus gph_wave_normalize(const struct GphWave *wave, struct GphWave **out);

/**
 * # Safety
 * `wave` must be null or a handle from this library.
 */
void gph_wave_free(struct GphWave *wave);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `wave` must be null or a live handle.
 */
size_t gph_wave_len(const struct GphWave *wave);

/**
 * Copy samples into `re` and `im`, which must each hold `len` doubles.
 *
 * # Safety
 * `re` and `im` must be valid for `len` writes.
 */
enum GphStatus gph_wave_copy_samples(const struct GphWave *wave,
                                     double *re,
                                     double *im,
                                     size_t len);

/**
 * `I_n(phi)` for `1 <= n <= 8`.
 *
 * # Safety
 * `wave` must be a live handle; `re` and `im` valid pointers.
 */
enum GphStatus gph_conserved_integral(const struct GphWave *wave,
                                      uint32_t n,
                                      int32_t kappa,
                                      double *re,
                                      double *im);

/**
 * Strang split-step evolution to `t_final`; writes the final state.
 *
 * # Safety
 * `wave` must be a live handle and `out` a valid pointer.
 */
enum GphStatus gph_evolve(const struct GphWave *wave,
                          int32_t kappa,
                          double dt,
                          double t_final,
                          struct GphWave **out);

/**
 * `W_n^j` for `1 <= n <= 10`, `j >= 1`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GphStatus gph_expr_build_w(uint32_t n, uint32_t j, struct GphExpr **out);

/**
 * Parse the textual form; the message of a parse error carries `line:column`.
 *
 * # Safety
 * `src` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GphStatus gph_expr_parse(const char *src, struct GphExpr **out);

/**
 * Canonical text of `expr`; release with [`gph_string_free`]. Null on error.
 *
 * # Safety
 * `expr` must be a live handle.
 */
char *gph_expr_to_string(const struct GphExpr *expr);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void gph_string_free(char *s);

/**
 * Number of terms, or 0 for a null handle.
 *
 * # Safety
 * `expr` must be null or a live handle.
 */
size_t gph_expr_term_count(const struct GphExpr *expr);

/**
 * Structural equality after normalization.
 *
 * # Safety
 * Both handles must be live and `out` a valid pointer.
 */
enum GphStatus gph_expr_equal(const struct GphExpr *a, const struct GphExpr *b, bool *out);

/**
 * # Safety
 * `expr` must be null or a handle from this library.
 */
void gph_expr_free(struct GphExpr *expr);

/**
 * `Tr((W_{n_1}^1 (x) W_{n_2}^{1+n_1} (x) ...) gamma^(k))` for the product state
 * of the unit-norm `wave`, with `k = n_1 + n_2 + ...`.
 *
 * # Safety
 * `orders` must hold `len` values; `wave` must be live; `re`, `im` valid.
 */
enum GphStatus gph_trace_w_product(const uint32_t *orders,
                                   size_t len,
                                   const struct GphWave *wave,
                                   int32_t kappa,
                                   double *re,
                                   double *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPH_H */
