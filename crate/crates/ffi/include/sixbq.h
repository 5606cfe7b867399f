#ifndef SIXBQ_H
#define SIXBQ_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SixbqStatus {
  SIXBQ_STATUS_OK = 0,
  SIXBQ_STATUS_INVALID_ARGUMENT = 1,
  SIXBQ_STATUS_CONSTRAINT = 2,
  SIXBQ_STATUS_NUMERICAL = 3,
  SIXBQ_STATUS_INVARIANT = 4,
  SIXBQ_STATUS_IO = 5,
  SIXBQ_STATUS_NULL_POINTER = 6,
  SIXBQ_STATUS_PANIC = 7,
} SixbqStatus;

// Opaque synthesized control with its verification figures.
typedef struct SixbqControl SixbqControl;

// Opaque closed-loop energy series.
typedef struct SixbqEnergySeries SixbqEnergySeries;

// Opaque localization profile `g`.
typedef struct SixbqProfile SixbqProfile;

// Opaque state `(u, u_t)` truncated at `|k| ≤ N`.
typedef struct SixbqState SixbqState;

typedef struct SixbqDecayFit {
  double gamma_hat;
  double c_hat;
  double r_squared;
  double window_start;
  double window_end;
} SixbqDecayFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread; empty if none.
const char *sixbq_last_error(void);

// Library version as a static NUL-terminated string.
const char *sixbq_version(void);

// `ω_k = sqrt(k² + βk⁴ + k⁶)`.
//
// # Safety
// `out` must be null or writable.
enum SixbqStatus sixbq_omega(int64_t k, int32_t beta, double *out);

// Creates a state from `2N+1` coefficients per array, ordered `k = -N..=N`.
//
// # Safety
// Each array must hold `2n + 1` readable doubles; `out` must be writable.
enum SixbqStatus sixbq_state_new(size_t n,
                                 const double *u_re,
                                 const double *u_im,
                                 const double *v_re,
                                 const double *v_im,
                                 struct SixbqState **out);

// Truncation order `N`, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
size_t sixbq_state_max_mode(const struct SixbqState *state);

// Copies the coefficients into caller arrays of length `2N+1`.
//
// # Safety
// `state` must be live; each array must hold `2N + 1` writable doubles.
enum SixbqStatus sixbq_state_coeffs(const struct SixbqState *state,
                                    double *u_re,
                                    double *u_im,
                                    double *v_re,
                                    double *v_im);

// `E = π Σ (|v_k|² + ω_k²|u_k|²)`.
//
// # Safety
// `state` must be live and `out` writable.
enum SixbqStatus sixbq_state_energy(const struct SixbqState *state, int32_t beta, double *out);

// # Safety
// `state` must be null or a handle not yet freed.
void sixbq_state_free(struct SixbqState *state);

// `kind`: 0 uniform, 1 raised cosine.
//
// # Safety
// `out` must be writable.
enum SixbqStatus sixbq_profile_builtin(int32_t kind, struct SixbqProfile **out);

// Validated custom profile from `2N+1` coefficients ordered `k = -N..=N`.
//
// # Safety
// Both arrays must hold `2n + 1` doubles; `out` must be writable.
enum SixbqStatus sixbq_profile_custom(size_t n,
                                      const double *re,
                                      const double *im,
                                      struct SixbqProfile **out);

// # Safety
// `g` must be null or a handle not yet freed.
void sixbq_profile_free(struct SixbqProfile *g);

// Synthesizes the linear control steering `initial` to `terminal` in time `t_horizon`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SixbqStatus sixbq_control_linear(const struct SixbqState *initial,
                                      const struct SixbqState *terminal,
                                      const struct SixbqProfile *profile,
                                      double t_horizon,
                                      int32_t beta,
                                      struct SixbqControl **out);

// Relative terminal `X^s` error of the verification run, or NaN for null.
//
// # Safety
// `control` must be null or live.
double sixbq_control_terminal_error(const struct SixbqControl *control);

// `‖h‖_{L²(0,T; H^s)}`, or NaN for null.
//
// # Safety
// `control` must be null or live.
double sixbq_control_norm(const struct SixbqControl *control);

// Coefficients of `h(t)`, `k = -N..=N`, into arrays of length `2N+1`.
//
// # Safety
// `control` must be live; both arrays must hold `2N + 1` writable doubles.
enum SixbqStatus sixbq_control_eval(const struct SixbqControl *control,
                                    double t,
                                    double *re,
                                    double *im);

// # Safety
// `control` must be null or a handle not yet freed.
void sixbq_control_free(struct SixbqControl *control);

// Runs the damped loop `u_tt + ... = -K G u_t` and returns its energy series.
//
// # Safety
// Handles must be live; `out` must be writable.
enum SixbqStatus sixbq_stabilize(const struct SixbqState *initial,
                                 const struct SixbqProfile *profile,
                                 double gain,
                                 double t_final,
                                 double dt,
                                 int32_t beta,
                                 bool nonlinear,
                                 struct SixbqEnergySeries **out);

// Number of samples, or 0 for null.
//
// # Safety
// `series` must be null or live.
size_t sixbq_series_len(const struct SixbqEnergySeries *series);

// Copies times, energies and `X^0` distances into arrays of `len` doubles.
//
// # Safety
// `series` must be live; each non-null array must hold `len` writable doubles.
enum SixbqStatus sixbq_series_copy(const struct SixbqEnergySeries *series,
                                   double *times,
                                   double *energy,
                                   double *distance,
                                   size_t len);

// Log-linear fit of the energy on `[0.1 T, T]`.
//
// # Safety
// `series` must be live and `out` writable.
enum SixbqStatus sixbq_series_energy_fit(const struct SixbqEnergySeries *series,
                                         struct SixbqDecayFit *out);

// # Safety
// `series` must be null or a handle not yet freed.
void sixbq_series_free(struct SixbqEnergySeries *series);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIXBQ_H */
