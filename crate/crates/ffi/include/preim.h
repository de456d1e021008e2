#ifndef PREIM_H
#define PREIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum {
  PREIM_STATUS_OK = 0,
  PREIM_STATUS_INVALID_ARGUMENT = 1,
  PREIM_STATUS_NUMERICAL_FAILURE = 2,
  PREIM_STATUS_UNSUPPORTED = 3,
  PREIM_STATUS_DEGENERATE_RESIDUAL = 4,
  PREIM_STATUS_NON_TERMINATION = 5,
  PREIM_STATUS_FORMAT = 6,
  PREIM_STATUS_IO = 7,
  PREIM_STATUS_NULL_POINTER = 8,
  PREIM_STATUS_BUFFER_TOO_SMALL = 9,
  PREIM_STATUS_PANIC = 10,
} PreimStatus;

/**
 * Opaque handle to a loaded reduced model.
 */
typedef struct PreimRom PreimRom;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads the archive in directory `dir` and stores a new handle in `*out`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer. The handle
 * must be released with [`preim_rom_free`].
 */
PreimStatus preim_rom_load(const char *dir, PreimRom **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `rom` must come from [`preim_rom_load`] and not be used afterwards.
 */
void preim_rom_free(PreimRom *rom);

/**
 * Reports the basis size `N`, the interpolation rank `M` and the number of time steps `K`.
 * Any output pointer may be null.
 *
 * # Safety
 * `rom` must be a live handle; non-null outputs must be writable.
 */
PreimStatus preim_rom_dims(const PreimRom *rom,
                           size_t *basis_len,
                           size_t *eim_rank,
                           size_t *num_steps);

/**
 * Solves the reduced model for parameter `mu` and writes the coefficients of
 * `û⁰ … ûᴷ` row by row into `out`, which must hold `(K + 1) · N` values.
 *
 * # Safety
 * `rom` must be a live handle and `out` must point to `len` writable doubles.
 */
PreimStatus preim_rom_online(const PreimRom *rom, double mu, double *out, size_t len);

/**
 * Runs an offline algorithm on a built-in test case and writes the archive to `out_dir`.
 *
 * `case_name` is `"a"` or `"b"`; `algorithm` is `"standard"`, `"preim"`,
 * `"preim-nr"` or `"user"`. A zero `refine` and non-positive tolerances keep
 * the case defaults.
 *
 * # Safety
 * All strings must be NUL-terminated.
 */
PreimStatus preim_offline(const char *case_name,
                          const char *algorithm,
                          size_t refine,
                          double eps_pod,
                          double eps_eim,
                          const char *out_dir);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length in bytes.
 * The message is empty after a successful call.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len == 0`.
 */
size_t preim_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREIM_H */
