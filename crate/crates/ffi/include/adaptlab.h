#ifndef ADAPTLAB_H
#define ADAPTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every call.
 */
typedef enum AdaptlabStatus {
  ADAPTLAB_STATUS_OK = 0,
  ADAPTLAB_STATUS_NULL_POINTER = 1,
  ADAPTLAB_STATUS_INVALID_UTF8 = 2,
  ADAPTLAB_STATUS_PARSE = 3,
  ADAPTLAB_STATUS_VALIDATION = 4,
  ADAPTLAB_STATUS_DIMENSION = 5,
  ADAPTLAB_STATUS_NON_FINITE = 6,
  ADAPTLAB_STATUS_NUMERIC = 7,
  ADAPTLAB_STATUS_IO = 8,
  ADAPTLAB_STATUS_BUFFER_TOO_SMALL = 9,
  ADAPTLAB_STATUS_OUT_OF_RANGE = 10,
  ADAPTLAB_STATUS_PANIC = 99,
} AdaptlabStatus;

/**
 * How a simulation ended.
 */
typedef enum AdaptlabTermination {
  ADAPTLAB_TERMINATION_HORIZON = 0,
  ADAPTLAB_TERMINATION_NON_FINITE = 1,
  ADAPTLAB_TERMINATION_CONVERGED = 2,
} AdaptlabTermination;

/**
 * A validated closed-loop scenario.
 */
typedef struct AdaptlabScenario AdaptlabScenario;

/**
 * A simulated trajectory together with the scenario that produced it.
 */
typedef struct AdaptlabTrajectory AdaptlabTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next adaptlab call on the same thread.
 */
const char *adaptlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *adaptlab_version(void);

/**
 * Parses and validates a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AdaptlabStatus adaptlab_scenario_from_toml(const char *toml, struct AdaptlabScenario **out);

/**
 * Loads one of the shipped scenarios (`s0`, `s1`, `s1_momentum`, `s2`,
 * `s3`, `probe_cos`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AdaptlabStatus adaptlab_scenario_builtin(const char *name, struct AdaptlabScenario **out);

/**
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void adaptlab_scenario_free(struct AdaptlabScenario *scenario);

/**
 * State, input and parameter dimensions of a scenario.
 *
 * # Safety
 * All pointers must be valid; `scenario` must be live.
 */
enum AdaptlabStatus adaptlab_scenario_dims(const struct AdaptlabScenario *scenario,
                                           size_t *n,
                                           size_t *m,
                                           size_t *p);

/**
 * Integrates the scenario. A run that stops on a numerical failure still
 * yields a trajectory (status `Ok`); check its termination.
 *
 * # Safety
 * `scenario` must be live and `out` writable.
 */
enum AdaptlabStatus adaptlab_simulate(const struct AdaptlabScenario *scenario,
                                      struct AdaptlabTrajectory **out);

/**
 * # Safety
 * `trajectory` must come from this library and not be used afterwards.
 */
void adaptlab_trajectory_free(struct AdaptlabTrajectory *trajectory);

/**
 * Number of samples (0 for NULL).
 *
 * # Safety
 * `trajectory` must be live or NULL.
 */
size_t adaptlab_trajectory_len(const struct AdaptlabTrajectory *trajectory);

/**
 * # Safety
 * `trajectory` must be live.
 */
enum AdaptlabStatus adaptlab_trajectory_termination(const struct AdaptlabTrajectory *trajectory,
                                                    enum AdaptlabTermination *out);

/**
 * Copies the sample times into `buf` (capacity `len`).
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum AdaptlabStatus adaptlab_trajectory_times(const struct AdaptlabTrajectory *trajectory,
                                              double *buf,
                                              size_t len);

/**
 * Copies `V` at every sample into `buf`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum AdaptlabStatus adaptlab_trajectory_values(const struct AdaptlabTrajectory *trajectory,
                                               double *buf,
                                               size_t len);

/**
 * Copies the Lyapunov monitor at every sample into `buf`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum AdaptlabStatus adaptlab_trajectory_monitor(const struct AdaptlabTrajectory *trajectory,
                                                double *buf,
                                                size_t len);

/**
 * Copies `x` and `theta_hat` of sample `index` into `x` (length `n`) and
 * `theta_hat` (length `p`). Either output may be NULL to skip it.
 *
 * # Safety
 * Non-NULL buffers must hold `n` and `p` doubles respectively.
 */
enum AdaptlabStatus adaptlab_trajectory_sample(const struct AdaptlabTrajectory *trajectory,
                                               size_t index,
                                               double *x,
                                               size_t n,
                                               double *theta_hat,
                                               size_t p);

/**
 * Writes the trajectory CSV (every `stride`-th row plus the last) into
 * `buf` as a NUL-terminated string. `needed` receives the size including
 * the terminator; pass `cap = 0` to query it.
 *
 * # Safety
 * `buf` must hold `cap` bytes when `cap > 0`; `needed` must be writable.
 */
enum AdaptlabStatus adaptlab_trajectory_csv(const struct AdaptlabTrajectory *trajectory,
                                            size_t stride,
                                            char *buf,
                                            size_t cap,
                                            size_t *needed);

/**
 * Synthesizes `P` for the pair `(A, B)` (row-major, `n x n` and `n x m`)
 * and decay rate `lambda`. Writes `P` (row-major, `n x n`) and the
 * certificate's maximal projected eigenvalue.
 *
 * # Safety
 * `a`, `b`, `p_out` must hold `n*n`, `n*m`, `n*n` doubles; `residual_out`
 * may be NULL.
 */
enum AdaptlabStatus adaptlab_synthesize_p(const double *a,
                                          const double *b,
                                          size_t n,
                                          size_t m,
                                          double lambda,
                                          uint64_t seed,
                                          double *p_out,
                                          double *residual_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTLAB_H */
