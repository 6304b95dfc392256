#ifndef LEADER_CONSENSUS_H
#define LEADER_CONSENSUS_H

/* Generated with cbindgen:0.27.0 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by every fallible function.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_UTF8 = 2,
  /*
   Configuration could not be parsed or validated.
   */
  LC_STATUS_CONFIG = 3,
  /*
   The system cannot be assembled because an assumption fails.
   */
  LC_STATUS_ASSUMPTION = 4,
  /*
   Numerical failure: non-finite state, singular system, quadrature.
   */
  LC_STATUS_NUMERIC = 5,
  /*
   Index or buffer length out of range.
   */
  LC_STATUS_OUT_OF_RANGE = 6,
  LC_STATUS_PANIC = 7,
} LcStatus;

/*
 Monte Carlo estimates with the envelope comparison.
 */
typedef struct LcEnsemble LcEnsemble;

/*
 A configured system, fixed or switching, with its assumption report.
 */
typedef struct LcSystem LcSystem;

/*
 One recorded path.
 */
typedef struct LcTrajectory LcTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *lc_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *lc_version(void);

/*
 Parses a JSON run configuration and assembles the system.

 # Safety
 `json` must be a NUL-terminated string and `out` writable.
 */
enum LcStatus lc_system_from_json(const char *json, struct LcSystem **out);

/*
 Releases a system; null is ignored.

 # Safety
 `sys` must come from [`lc_system_from_json`] and not be used afterwards.
 */
void lc_system_free(struct LcSystem *sys);

/*
 Number of followers.

 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum LcStatus lc_system_followers(const struct LcSystem *sys, size_t *out);

/*
 `1` when the system uses a topology set.

 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum LcStatus lc_system_is_switching(const struct LcSystem *sys, int32_t *out);

/*
 Largest eigenvalue of the Lyapunov solution `P`; fixed topologies only.

 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum LcStatus lc_system_lambda_max_p(const struct LcSystem *sys, double *out);

/*
 Assumption outcome: `all_hold` is 1 when every applicable assumption
 holds, `margin` is `rho` (fixed) or `nu` (switching).

 # Safety
 `sys` must be a live handle; `all_hold` and `margin` writable.
 */
enum LcStatus lc_system_check(const struct LcSystem *sys, int32_t *all_hold, double *margin);

/*
 Assumption report as a JSON string owned by the handle.

 # Safety
 `sys` must be a live handle and `out` writable; the string lives as long
 as the handle.
 */
enum LcStatus lc_system_report_json(const struct LcSystem *sys, const char **out);

/*
 One seeded path with the configured `sim` settings.

 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum LcStatus lc_simulate(const struct LcSystem *sys, struct LcTrajectory **out);

/*
 # Safety
 `traj` must come from [`lc_simulate`] and not be used afterwards.
 */
void lc_trajectory_free(struct LcTrajectory *traj);

/*
 Number of recorded times.

 # Safety
 `traj` must be a live handle and `out` writable.
 */
enum LcStatus lc_trajectory_len(const struct LcTrajectory *traj, size_t *out);

/*
 Record `k`: its time, `V`, and `ε = (x*, v*)` copied into `eps`
 (`eps_len` must be `2n`).

 # Safety
 `traj` must be a live handle, `time` and `v` writable and `eps` hold
 `eps_len` doubles.
 */
enum LcStatus lc_trajectory_record(const struct LcTrajectory *traj,
                                   size_t k,
                                   double *time,
                                   double *v,
                                   double *eps,
                                   size_t eps_len);

/*
 Monte Carlo ensemble of `runs` paths (0 means the configured size) and
 its envelope comparison.

 # Safety
 `sys` must be a live handle and `out` writable.
 */
enum LcStatus lc_monte_carlo(const struct LcSystem *sys, size_t runs, struct LcEnsemble **out);

/*
 # Safety
 `ens` must come from [`lc_monte_carlo`] and not be used afterwards.
 */
void lc_ensemble_free(struct LcEnsemble *ens);

/*
 Number of recorded times.

 # Safety
 `ens` must be a live handle and `out` writable.
 */
enum LcStatus lc_ensemble_len(const struct LcEnsemble *ens, size_t *out);

/*
 Row `k` of the ensemble table: time, mean `||ε||²`, its standard error,
 envelope (NaN when unavailable) and mean `V`.

 # Safety
 `ens` must be a live handle and every output pointer writable.
 */
enum LcStatus lc_ensemble_row(const struct LcEnsemble *ens,
                              size_t k,
                              double *time,
                              double *ms_error,
                              double *stderr,
                              double *envelope,
                              double *v_mean);

/*
 Number of recorded times where the mean `V` exceeds the envelope by more
 than three standard errors; `-1` when no envelope is available.

 # Safety
 `ens` must be a live handle and `out` writable.
 */
enum LcStatus lc_ensemble_envelope_violations(const struct LcEnsemble *ens, int64_t *out);

/*
 Standard normal draw for `(seed, run, step, channel)`.
 */
double lc_gaussian(uint64_t seed, uint32_t run, uint64_t step, uint32_t channel);

/*
 Solves `M^T P + P M = I` for a row-major `n x n` matrix `m`, writing `P`
 row-major into `p` and the Frobenius residual into `residual` (may be
 null).

 # Safety
 `m` and `p` must each hold `n * n` doubles.
 */
enum LcStatus lc_solve_lyapunov(const double *m, size_t n, double *p, double *residual);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEADER_CONSENSUS_H */
