#ifndef FRACLOP_H
#define FRACLOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  FRACLOP_STATUS_OK = 0,
  FRACLOP_STATUS_NULL_POINTER = 1,
  FRACLOP_STATUS_INVALID_ARGUMENT = 2,
  FRACLOP_STATUS_SHAPE_MISMATCH = 3,
  /**
   * Breakdown, loss of definiteness, NaN or an unreachable tolerance.
   */
  FRACLOP_STATUS_NUMERICAL_FAILURE = 4,
  FRACLOP_STATUS_IO = 5,
  /**
   * The solver did not reach the stopping tolerance within `max_iter`.
   */
  FRACLOP_STATUS_NOT_CONVERGED = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  FRACLOP_STATUS_PANIC = 7,
} FraclopStatus;

typedef enum {
  FRACLOP_DESIGN_BOX = 0,
  FRACLOP_DESIGN_H = 1,
} FraclopDesign;

typedef enum {
  FRACLOP_PRECOND_LAPLACE = 0,
  FRACLOP_PRECOND_ANISO = 1,
  FRACLOP_PRECOND_DIRECT = 2,
} FraclopPrecond;

/**
 * Opaque control problem.
 */
typedef struct FraclopProblem FraclopProblem;

/**
 * Opaque solve result with its recovered state.
 */
typedef struct FraclopSolution FraclopSolution;

/**
 * Opaque canonical tensor.
 */
typedef struct FraclopTensor FraclopTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *fraclop_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fraclop_version(void);

/**
 * Reference problem on `n` points per direction in `dim` (2 or 3)
 * directions: coefficients a1, a2(, a3), `beta = gamma = 1`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
FraclopStatus fraclop_problem_new(size_t dim,
                                  size_t n,
                                  double alpha,
                                  FraclopDesign design,
                                  FraclopProblem **out);

/**
 * # Safety
 * `p` must be null or a handle from [`fraclop_problem_new`] not yet freed.
 */
void fraclop_problem_free(FraclopProblem *p);

/**
 * Sets the cost weights.
 *
 * # Safety
 * `p` must be a valid problem handle.
 */
FraclopStatus fraclop_problem_set_weights(FraclopProblem *p, double beta, double gamma);

/**
 * Chooses the preconditioner and its rank and tolerance.
 *
 * # Safety
 * `p` must be a valid problem handle.
 */
FraclopStatus fraclop_problem_set_precond(FraclopProblem *p,
                                          FraclopPrecond kind,
                                          size_t rank,
                                          double eps);

/**
 * PCG truncation tolerance, stopping tolerance, iteration limit and rank cap.
 *
 * # Safety
 * `p` must be a valid problem handle.
 */
FraclopStatus fraclop_problem_set_solver(FraclopProblem *p,
                                         double eps,
                                         double stop_tol,
                                         size_t max_iter,
                                         size_t rank_cap);

/**
 * Solves for the control and recovers the state. Returns
 * [`FraclopStatus::NotConverged`] with a valid `*out` when the iteration
 * limit was hit first.
 *
 * # Safety
 * `p` must be a valid problem handle and `out` writable.
 */
FraclopStatus fraclop_solve(const FraclopProblem *p, FraclopSolution **out);

/**
 * # Safety
 * `s` must be null or a handle from [`fraclop_solve`] not yet freed.
 */
void fraclop_solution_free(FraclopSolution *s);

/**
 * Number of PCG iterations, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a valid solution handle.
 */
size_t fraclop_solution_iterations(const FraclopSolution *s);

/**
 * Final relative residual, NaN for a null handle.
 *
 * # Safety
 * `s` must be null or a valid solution handle.
 */
double fraclop_solution_residual(const FraclopSolution *s);

/**
 * Largest rank of any PCG iterate, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a valid solution handle.
 */
size_t fraclop_solution_max_rank(const FraclopSolution *s);

/**
 * Copy of the control as a new tensor handle.
 *
 * # Safety
 * `s` must be a valid solution handle and `out` writable.
 */
FraclopStatus fraclop_solution_control(const FraclopSolution *s, FraclopTensor **out);

/**
 * Copy of the state as a new tensor handle.
 *
 * # Safety
 * `s` must be a valid solution handle and `out` writable.
 */
FraclopStatus fraclop_solution_state(const FraclopSolution *s, FraclopTensor **out);

/**
 * # Safety
 * `t` must be null or a tensor handle not yet freed.
 */
void fraclop_tensor_free(FraclopTensor *t);

/**
 * Number of modes, 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a valid tensor handle.
 */
size_t fraclop_tensor_ndim(const FraclopTensor *t);

/**
 * Canonical rank, 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a valid tensor handle.
 */
size_t fraclop_tensor_rank(const FraclopTensor *t);

/**
 * Writes the mode sizes into `shape[0..len]`; `len` must equal the number
 * of modes.
 *
 * # Safety
 * `t` must be a valid tensor handle and `shape` valid for `len` writes.
 */
FraclopStatus fraclop_tensor_shape(const FraclopTensor *t, size_t *shape, size_t len);

/**
 * Entry at the multi-index `idx[0..len]`.
 *
 * # Safety
 * `t` must be a valid tensor handle, `idx` valid for `len` reads and `out`
 * writable.
 */
FraclopStatus fraclop_tensor_entry(const FraclopTensor *t,
                                   const size_t *idx,
                                   size_t len,
                                   double *out);

/**
 * Writes the tensor in the CANON text format.
 *
 * # Safety
 * `t` must be a valid tensor handle and `path` a NUL-terminated string.
 */
FraclopStatus fraclop_tensor_save(const FraclopTensor *t, const char *path);

/**
 * Reads a CANON file into a new tensor handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
FraclopStatus fraclop_tensor_load(const char *path, FraclopTensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACLOP_H */
