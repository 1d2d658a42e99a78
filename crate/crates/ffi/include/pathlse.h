#ifndef PATHLSE_H
#define PATHLSE_H

#include <stddef.h>
#include <stdint.h>

// Default bound on `μ·h` for internal refinement in [`pathlse_simulate`].
#define PATHLSE_DEFAULT_MAX_MU_DT 0.02

typedef enum PathlseStatus {
  PATHLSE_STATUS_OK = 0,
  PATHLSE_STATUS_NULL_POINTER = 1,
  PATHLSE_STATUS_VALIDATION = 2,
  PATHLSE_STATUS_NUMERIC = 3,
  PATHLSE_STATUS_BUFFER_TOO_SMALL = 4,
  PATHLSE_STATUS_PANIC = 5,
} PathlseStatus;

typedef enum PathlseCase {
  PATHLSE_CASE_UNIQUE = 0,
  PATHLSE_CASE_NONE = 1,
  PATHLSE_CASE_TWO_ROOTS_GREATER = 2,
  PATHLSE_CASE_CONSTANT_MAP = 3,
} PathlseCase;

// Opaque spectral model.
typedef struct PathlseModel PathlseModel;

// Opaque set of mode trajectories on a uniform grid.
typedef struct PathlseTrajectories PathlseTrajectories;

typedef struct PathlseEstimate {
  double value;
  enum PathlseCase case_tag;
  size_t iterations;
  double residual;
  double r_at_zero;
} PathlseEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the same
// thread.
const char *pathlse_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pathlse_version(void);

// Δ, Δ′ and Δ″ at `(mu, hurst, horizon)`. Any output pointer may be null.
//
// # Safety
// Non-null output pointers must be valid for a write of one `double`.
enum PathlseStatus pathlse_delta(double mu,
                                 double hurst,
                                 double horizon,
                                 double *out_delta,
                                 double *out_prime,
                                 double *out_second);

// Lower incomplete gamma function γ(h, x).
//
// # Safety
// `out` must be valid for a write of one `double`.
enum PathlseStatus pathlse_lower_incomplete_gamma(double h, double x, double *out);

// One-dimensional heat operator on (0, 1), `n` modes. `initial` may be null
// when `n_initial` is 0.
//
// # Safety
// `initial` must point to `n_initial` doubles; `out` must be writable.
enum PathlseStatus pathlse_model_heat1d(size_t n,
                                        double lambda1,
                                        double lambda2,
                                        double hurst,
                                        double horizon,
                                        const double *initial,
                                        size_t n_initial,
                                        struct PathlseModel **out);

// Two-dimensional heat operator on the unit square, the `n` lowest modes.
//
// # Safety
// As for [`pathlse_model_heat1d`].
enum PathlseStatus pathlse_model_heat2d(size_t n,
                                        double lambda1,
                                        double lambda2,
                                        double hurst,
                                        double horizon,
                                        const double *initial,
                                        size_t n_initial,
                                        struct PathlseModel **out);

// Model from explicit eigenvalue sequences. `lambda_true` may be NaN when
// unknown; simulation then fails with a validation error.
//
// # Safety
// `alpha` and `beta` must point to `n` doubles, `initial` to `n_initial`.
enum PathlseStatus pathlse_model_raw(const double *alpha,
                                     const double *beta,
                                     size_t n,
                                     double hurst,
                                     double horizon,
                                     double lambda_true,
                                     const double *initial,
                                     size_t n_initial,
                                     struct PathlseModel **out);

// Number of modes, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t pathlse_model_n_modes(const struct PathlseModel *model);

// # Safety
// `model` must be null or a handle not yet freed.
void pathlse_model_free(struct PathlseModel *model);

// Simulate all modes of `model` on `n_steps` uniform steps. Run `run` of
// master `seed` gives the same paths as the CLI and Monte Carlo harness.
// `max_mu_dt = 0` disables internal refinement.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum PathlseStatus pathlse_simulate(const struct PathlseModel *model,
                                    size_t n_steps,
                                    uint64_t seed,
                                    size_t run,
                                    double max_mu_dt,
                                    struct PathlseTrajectories **out);

// Wrap observed data: `values` holds `n_modes` rows of `n_steps + 1` samples
// each, mode-major, on a uniform grid over `[0, horizon]`.
//
// # Safety
// `values` must point to `n_modes * (n_steps + 1)` doubles.
enum PathlseStatus pathlse_trajectories_from_values(double horizon,
                                                    size_t n_steps,
                                                    const double *values,
                                                    size_t n_modes,
                                                    struct PathlseTrajectories **out);

// # Safety
// `traj` must be null or a live handle.
size_t pathlse_trajectories_n_modes(const struct PathlseTrajectories *traj);

// Grid points per mode (`n_steps + 1`), or 0 for a null handle.
//
// # Safety
// `traj` must be null or a live handle.
size_t pathlse_trajectories_n_points(const struct PathlseTrajectories *traj);

// Copy mode `mode` (0-based) into `buf`, which must hold at least
// `pathlse_trajectories_n_points` doubles.
//
// # Safety
// `traj` must be a live handle and `buf` valid for `len` writes.
enum PathlseStatus pathlse_trajectories_copy_mode(const struct PathlseTrajectories *traj,
                                                  size_t mode,
                                                  double *buf,
                                                  size_t len);

// # Safety
// `traj` must be null or a handle not yet freed.
void pathlse_trajectories_free(struct PathlseTrajectories *traj);

// Pathwise least-squares estimate from the trajectories, which must not have
// more modes than the model.
//
// # Safety
// Handles must be live; `out` must be writable.
enum PathlseStatus pathlse_estimate(const struct PathlseModel *model,
                                    const struct PathlseTrajectories *traj,
                                    struct PathlseEstimate *out);

// Least-squares estimate that uses the true drift in its compensation term.
//
// # Safety
// Handles must be live; `out` must be writable.
enum PathlseStatus pathlse_theoretical_estimate(const struct PathlseModel *model,
                                                const struct PathlseTrajectories *traj,
                                                double lambda_true,
                                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATHLSE_H */
