#ifndef DIXLAB_H
#define DIXLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DixStatus {
  DIX_STATUS_OK = 0,
  DIX_STATUS_NULL_POINTER = 1,
  DIX_STATUS_INVALID_UTF8 = 2,
  DIX_STATUS_INVALID_INPUT = 3,
  DIX_STATUS_BUDGET = 4,
  DIX_STATUS_QUADRATURE = 5,
  DIX_STATUS_SUPPORT_LEAK = 6,
  DIX_STATUS_EIGENSOLVER = 7,
  DIX_STATUS_NOT_CLASSICAL = 8,
  DIX_STATUS_NOT_MODULATED = 9,
  DIX_STATUS_NOT_HERMITIAN = 10,
  DIX_STATUS_INSUFFICIENT_GRID = 11,
  DIX_STATUS_CONFIG = 12,
  DIX_STATUS_IO = 13,
  DIX_STATUS_BUFFER_TOO_SMALL = 14,
  DIX_STATUS_PANIC = 15,
} DixStatus;

typedef struct DixOperator DixOperator;

typedef struct DixResidueSeries DixResidueSeries;

typedef struct DixSymbol DixSymbol;

typedef struct DixComplex {
  double re;
  double im;
} DixComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *dix_last_error(void);

const char *dix_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void dix_string_free(char *s);

/**
 * Builds a symbol on `T^d` from a TOML symbol table (`kind = "classical"`, ...).
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum DixStatus dix_symbol_from_toml(const char *toml, size_t d, struct DixSymbol **out);

/**
 * Same as [`dix_symbol_from_toml`] with a JSON object.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum DixStatus dix_symbol_from_json(const char *json, size_t d, struct DixSymbol **out);

/**
 * # Safety
 * `sym` must be null or a handle from a `dix_symbol_from_*` call, freed once.
 */
void dix_symbol_free(struct DixSymbol *sym);

/**
 * Dimension of the symbol, 0 for a null handle.
 *
 * # Safety
 * `sym` must be null or a live handle.
 */
size_t dix_symbol_dim(const struct DixSymbol *sym);

/**
 * `p(x, ξ)`; `x` and `xi` hold `dim` values each.
 *
 * # Safety
 * `sym` must be live, `x` and `xi` readable for `dim` doubles, `out` writable.
 */
enum DixStatus dix_symbol_eval(const struct DixSymbol *sym,
                               const double *x,
                               const double *xi,
                               struct DixComplex *out);

/**
 * Wodzicki residue of a classical symbol.
 *
 * # Safety
 * `sym` must be live and `out` writable.
 */
enum DixStatus dix_symbol_wodzicki_residue(const struct DixSymbol *sym, struct DixComplex *out);

/**
 * Residue series on a strictly increasing grid of `log n` values.
 *
 * # Safety
 * `sym` must be live, `log_n` readable for `len` doubles, `out` writable.
 */
enum DixStatus dix_residue_series(const struct DixSymbol *sym,
                                  const double *log_n,
                                  size_t len,
                                  struct DixResidueSeries **out);

/**
 * # Safety
 * `series` must be null or a live handle.
 */
size_t dix_residue_series_len(const struct DixResidueSeries *series);

/**
 * Grid point `i` as `log n` and its residue value.
 *
 * # Safety
 * `series` must be live; `log_n` and `value` writable.
 */
enum DixStatus dix_residue_series_get(const struct DixResidueSeries *series,
                                      size_t i,
                                      double *log_n,
                                      struct DixComplex *value);

/**
 * # Safety
 * `series` must be null or a handle from [`dix_residue_series`], freed once.
 */
void dix_residue_series_free(struct DixResidueSeries *series);

/**
 * Torus quantization of `sym` on frequencies `|m|_∞ ≤ k`. A `max_n` of 0
 * uses the default budget (or `DIXLAB_MAX_N`).
 *
 * # Safety
 * `sym` must be live and `out` writable.
 */
enum DixStatus dix_operator_assemble(const struct DixSymbol *sym,
                                     size_t k,
                                     size_t max_n,
                                     struct DixOperator **out);

/**
 * # Safety
 * `op` must be null or a live handle.
 */
size_t dix_operator_size(const struct DixOperator *op);

/**
 * # Safety
 * `op` must be live and `out` writable.
 */
enum DixStatus dix_operator_trace(const struct DixOperator *op, struct DixComplex *out);

/**
 * Eigenvalues ordered by decreasing modulus into `buf`, which must hold
 * `dix_operator_size(op)` entries.
 *
 * # Safety
 * `op` must be live and `buf` writable for `cap` entries.
 */
enum DixStatus dix_operator_eigenvalues(const struct DixOperator *op,
                                        struct DixComplex *buf,
                                        size_t cap);

/**
 * # Safety
 * `op` must be null or a handle from [`dix_operator_assemble`], freed once.
 */
void dix_operator_free(struct DixOperator *op);

/**
 * Runs the experiment described by a TOML config, as `dixlab run` would,
 * without writing files. `report_json` and `csv` receive owned strings;
 * `passed` receives 1 or 0. Output handles may be null to skip them.
 *
 * # Safety
 * `config` must be a NUL-terminated string; non-null outputs writable.
 */
enum DixStatus dix_run_config(const char *config, char **report_json, char **csv, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIXLAB_H */
