#ifndef NAVIER_WALL_H
#define NAVIER_WALL_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum NwStatus {
  NW_STATUS_OK = 0,
  NW_STATUS_INVALID_ARGUMENT = 1,
  NW_STATUS_NON_CONVERGENCE = 2,
  NW_STATUS_IO = 3,
  NW_STATUS_PARSE = 4,
  NW_STATUS_EVALUATION = 5,
  NW_STATUS_NULL_POINTER = 6,
  NW_STATUS_BUFFER_TOO_SMALL = 7,
  NW_STATUS_PANIC = 8,
} NwStatus;

/**
 * Parsed expression in `x` and `y`.
 */
typedef struct NwExpr NwExpr;

/**
 * Solved limit problem.
 */
typedef struct NwLimit NwLimit;

/**
 * Cell coefficients and the effective matrix `K = nu diag(c1, c2)`.
 */
typedef struct NwCellCoefficients {
  double c1;
  double c2;
  double k11;
  double k12;
  double k21;
  double k22;
} NwCellCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *nw_last_error(void);

/**
 * Parses `text`. On a parse error `*error_offset` (if not null) receives
 * the byte offset of the problem.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` and `error_offset` must be
 * valid for writes or null.
 */
enum NwStatus nw_expr_parse(const char *text_ptr, struct NwExpr **out, size_t *error_offset);

/**
 * # Safety
 * `expr` must come from `nw_expr_parse`; `out` must be valid for writes.
 */
enum NwStatus nw_expr_eval(const struct NwExpr *expr, double x, double y, double *out);

/**
 * Writes the canonical text of `expr` into `buf` (NUL-terminated). `*len`
 * receives the required size including the terminator.
 *
 * # Safety
 * `expr` must come from `nw_expr_parse`; `buf` must hold `cap` bytes or be
 * null with `cap = 0`; `len` must be valid for writes.
 */
enum NwStatus nw_expr_to_string(const struct NwExpr *expr, char *buf, size_t cap, size_t *len);

/**
 * # Safety
 * `expr` must come from `nw_expr_parse` and not be used afterwards.
 */
void nw_expr_free(struct NwExpr *expr);

/**
 * Solves both cell problems for `profile` (`flat:H`, `bump:A`, `tent:A`
 * or an expression in x on the unit cell).
 *
 * # Safety
 * `profile` must be NUL-terminated; `out` must be valid for writes.
 */
enum NwStatus nw_cell_coefficients(const char *profile,
                                   size_t nx,
                                   size_t ny,
                                   double nu,
                                   struct NwCellCoefficients *out);

/**
 * Solves the limit problem described by flat `key = value` configuration
 * text (same keys as the command line configuration file).
 *
 * # Safety
 * `config` must be NUL-terminated; `out` must be valid for writes.
 */
enum NwStatus nw_limit_solve(const char *config, struct NwLimit **out);

/**
 * Number of bottom trace nodes.
 *
 * # Safety
 * `limit` must come from `nw_limit_solve` or be null (returns 0).
 */
size_t nw_limit_len(const struct NwLimit *limit);

/**
 * Limit energy `G0`.
 *
 * # Safety
 * `limit` must come from `nw_limit_solve`; `out` must be valid for writes.
 */
enum NwStatus nw_limit_g0(const struct NwLimit *limit, double *out);

/**
 * `max |div u| / (1 + max |u|)` of the solution.
 *
 * # Safety
 * `limit` must come from `nw_limit_solve`; `out` must be valid for writes.
 */
enum NwStatus nw_limit_divergence_residual(const struct NwLimit *limit, double *out);

/**
 * Copies the node coordinates into `buf` (at least `nw_limit_len` values).
 *
 * # Safety
 * `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
 */
enum NwStatus nw_limit_x(const struct NwLimit *limit, double *buf, size_t cap);

/**
 * Copies the bottom velocity trace into `buf`.
 *
 * # Safety
 * `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
 */
enum NwStatus nw_limit_trace(const struct NwLimit *limit, double *buf, size_t cap);

/**
 * Copies the bottom tangential traction into `buf`.
 *
 * # Safety
 * `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
 */
enum NwStatus nw_limit_traction(const struct NwLimit *limit, double *buf, size_t cap);

/**
 * # Safety
 * `limit` must come from `nw_limit_solve` and not be used afterwards.
 */
void nw_limit_free(struct NwLimit *limit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAVIER_WALL_H */
