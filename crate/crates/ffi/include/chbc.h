#ifndef CHBC_H
#define CHBC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChbcStatus {
  CHBC_STATUS_OK = 0,
  CHBC_STATUS_NULL_POINTER = 1,
  CHBC_STATUS_INVALID_UTF8 = 2,
  CHBC_STATUS_CONFIG_REJECTED = 3,
  CHBC_STATUS_SOLVER_FAILURE = 4,
  CHBC_STATUS_INVALID_INPUT = 5,
  CHBC_STATUS_INTERNAL = 6,
} ChbcStatus;

// Opaque problem handle.
typedef struct ChbcProblem ChbcProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Build a problem from a NUL-terminated TOML configuration.
//
// # Safety
// `toml` must be a valid C string and `out` a valid pointer to writable storage.
enum ChbcStatus chbc_problem_from_toml(const char *toml, struct ChbcProblem **out);

// Build the bundled default problem.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum ChbcStatus chbc_problem_default(struct ChbcProblem **out);

// Release a handle. Passing NULL is a no-op.
//
// # Safety
// `problem` must come from a `chbc_problem_*` constructor and not be used afterwards.
void chbc_problem_free(struct ChbcProblem *problem);

// Number of bulk nodes, boundary nodes and time levels.
//
// # Safety
// All pointers must be valid; `problem` must be a live handle.
enum ChbcStatus chbc_problem_dims(const struct ChbcProblem *problem,
                                  uintptr_t *n_bulk,
                                  uintptr_t *n_boundary,
                                  uintptr_t *levels);

// Copy the configured control (`levels * n_boundary` doubles) into `out`.
//
// # Safety
// `out` must hold `levels * n_boundary` doubles.
enum ChbcStatus chbc_initial_control(const struct ChbcProblem *problem, double *out);

// Solve the state system. `control` may be NULL to use the configured control;
// `mu_out` and `rho_out` may be NULL, otherwise they receive
// `levels * n_bulk` doubles each.
//
// # Safety
// Buffers must have the documented lengths; `problem` must be a live handle.
enum ChbcStatus chbc_simulate(const struct ChbcProblem *problem,
                              const double *control,
                              double *mu_out,
                              double *rho_out);

// Evaluate the reduced cost at `control` (NULL for the configured control).
//
// # Safety
// `cost_out` must be valid; `control`, when not NULL, must hold `levels * n_boundary` doubles.
enum ChbcStatus chbc_cost(const struct ChbcProblem *problem,
                          const double *control,
                          double *cost_out);

// Cost and its `L2(Sigma)` gradient `q_G + beta_6 u`, written to
// `grad_out` (`levels * n_boundary` doubles).
//
// # Safety
// Buffers must have the documented lengths; `problem` must be a live handle.
enum ChbcStatus chbc_gradient(const struct ChbcProblem *problem,
                              const double *control,
                              double *cost_out,
                              double *grad_out);

// `L2(Sigma)` inner product of two controls with the solver's quadrature.
//
// # Safety
// `a` and `b` must hold `levels * n_boundary` doubles; `out` must be valid.
enum ChbcStatus chbc_control_inner(const struct ChbcProblem *problem,
                                   const double *a,
                                   const double *b,
                                   double *out);

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *chbc_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHBC_H */
