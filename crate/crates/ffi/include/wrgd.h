/* C interface to the wrgd phase-retrieval solvers. Generated file. */

#ifndef WRGD_H
#define WRGD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum WrgdStatus {
  WRGD_STATUS_OK = 0,
  WRGD_STATUS_INVALID_ARGUMENT = 1,
  WRGD_STATUS_NUMERIC = 2,
  WRGD_STATUS_DEGENERATE_RETRACTION = 3,
  WRGD_STATUS_IO = 4,
  WRGD_STATUS_FORMAT = 5,
  WRGD_STATUS_NULL_POINTER = 6,
  WRGD_STATUS_PANIC = 7,
} WrgdStatus;

typedef enum WrgdSolver {
  WRGD_SOLVER_TWRGD = 0,
  WRGD_SOLVER_TRGD = 1,
  WRGD_SOLVER_TWF = 2,
} WrgdSolver;

// Opaque set of sensing vectors.
typedef struct WrgdEnsemble WrgdEnsemble;

// Opaque solver trace.
typedef struct WrgdTrace WrgdTrace;

// Solver settings. Fill with [`wrgd_default_options`] and adjust.
typedef struct WrgdOptions {
  double tau0;
  double tau1;
  double tau2;
  bool truncated;
  // Exact line search when true, otherwise the fixed `step`.
  bool exact_step;
  double step;
  size_t max_iters;
  double mse_tol;
} WrgdOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *wrgd_last_error(void);

// Library version as a static NUL-terminated string.
const char *wrgd_version(void);

// Draws `m` complex Gaussian sensing vectors of length `n` from `seed`.
enum WrgdStatus wrgd_ensemble_sample(size_t n, size_t m, uint64_t seed, struct WrgdEnsemble **out);

// Wraps explicit sensing vectors: `rows` holds `m` rows of `n` complex
// entries, row-major and interleaved (`2nm` doubles).
enum WrgdStatus wrgd_ensemble_from_rows(size_t n,
                                        size_t m,
                                        const double *rows,
                                        struct WrgdEnsemble **out);

// Loads an ensemble written by [`wrgd_ensemble_write`].
enum WrgdStatus wrgd_ensemble_read(const char *path, struct WrgdEnsemble **out);

enum WrgdStatus wrgd_ensemble_write(const struct WrgdEnsemble *ens, const char *path);

// Releases an ensemble. Null is ignored.
void wrgd_ensemble_free(struct WrgdEnsemble *ens);

// Signal length, or 0 for null.
size_t wrgd_ensemble_n(const struct WrgdEnsemble *ens);

// Number of measurements, or 0 for null.
size_t wrgd_ensemble_m(const struct WrgdEnsemble *ens);

// `y_k = |a_k^* x|^2`. `x` has `n` complex entries, `y_out` room for `m`.
enum WrgdStatus wrgd_forward_intensities(const struct WrgdEnsemble *ens,
                                         const double *x,
                                         double *y_out);

// Truncated spectral estimate of the signal from `m` intensities.
enum WrgdStatus wrgd_spectral_init(const struct WrgdEnsemble *ens,
                                   const double *y,
                                   size_t y_len,
                                   size_t power_iters,
                                   uint64_t seed,
                                   double *z_out);

// Default settings for `solver`.
enum WrgdStatus wrgd_default_options(enum WrgdSolver solver, struct WrgdOptions *out);

// Runs `solver` from `z0`. `x_true` may be null, in which case errors are
// not tracked and only the iteration budget stops the run. `options` may be
// null for the solver defaults. A run that stops early on a numeric problem
// still returns `Ok` with a trace; see [`wrgd_trace_failure`].
enum WrgdStatus wrgd_solve(enum WrgdSolver solver,
                           const struct WrgdEnsemble *ens,
                           const double *y,
                           size_t y_len,
                           const double *x_true,
                           const double *z0,
                           const struct WrgdOptions *options,
                           struct WrgdTrace **out);

// Releases a trace. Null is ignored.
void wrgd_trace_free(struct WrgdTrace *trace);

// Number of recorded iterates (updates + 1), or 0 for null.
size_t wrgd_trace_len(const struct WrgdTrace *trace);

// Number of updates performed, or 0 for null.
size_t wrgd_trace_iters(const struct WrgdTrace *trace);

bool wrgd_trace_converged(const struct WrgdTrace *trace);

// Late-stage contraction estimate, NaN when unavailable.
double wrgd_trace_nu_hat(const struct WrgdTrace *trace);

// Copies the relative error of every recorded iterate into `out`, which must
// hold [`wrgd_trace_len`] doubles.
enum WrgdStatus wrgd_trace_rel_mse(const struct WrgdTrace *trace, double *out, size_t len);

// Copies the final estimate (`n` complex entries) into `z_out`.
enum WrgdStatus wrgd_trace_estimate(const struct WrgdTrace *trace, double *z_out, size_t n);

// Reason the run stopped early, or null. Valid while the trace lives.
const char *wrgd_trace_failure(const struct WrgdTrace *trace);

// Writes the per-iterate CSV.
enum WrgdStatus wrgd_trace_write_csv(const struct WrgdTrace *trace, const char *path);

// `min_phi ||z - e^{i phi} x||` for two length-`n` complex vectors.
enum WrgdStatus wrgd_dist_phase(const double *z, const double *x, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WRGD_H */
