//! C ABI over `sixbq`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_create`
//! functions and released by the matching `*_free`. Every fallible call returns
//! a `SixbqStatus`; on failure `sixbq_last_error` describes the cause. The
//! message is thread-local and valid until the next failing call on the thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sixbq::control::{k_t, ControlConfig, ControlSignal};
use sixbq::linear::{omega, LinearSymbol};
use sixbq::spectral::{Beta, FourierField, GProfile, StateVector, C64};
use sixbq::stabilization::{decay_fit, default_window, evolve_closed_loop, ClosedLoopOptions, EnergySeries};
use sixbq::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SixbqStatus {
    Ok = 0,
    InvalidArgument = 1,
    Constraint = 2,
    Numerical = 3,
    Invariant = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Opaque state `(u, u_t)` truncated at `|k| ≤ N`.
pub struct SixbqState(StateVector);

/// Opaque localization profile `g`.
pub struct SixbqProfile(GProfile);

/// Opaque synthesized control with its verification figures.
pub struct SixbqControl {
    signal: ControlSignal,
    terminal_error: f64,
    control_norm: f64,
}

/// Opaque closed-loop energy series.
pub struct SixbqEnergySeries(EnergySeries);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SixbqDecayFit {
    pub gamma_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub window_start: f64,
    pub window_end: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SixbqStatus {
    match e {
        Error::Io(_) => SixbqStatus::Io,
        Error::Constraint { .. } => SixbqStatus::Constraint,
        Error::Invariant(_) => SixbqStatus::Invariant,
        _ => match e.exit_code() {
            3 => SixbqStatus::Numerical,
            _ => SixbqStatus::InvalidArgument,
        },
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (SixbqStatus, String)>) -> SixbqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SixbqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SixbqStatus::Panic
        }
    }
}

fn lib<T>(r: sixbq::Result<T>) -> Result<T, (SixbqStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SixbqStatus, String) {
    (SixbqStatus::NullPointer, format!("{what} is null"))
}

fn beta_of(beta: i32) -> Result<Beta, (SixbqStatus, String)> {
    lib(Beta::try_from(beta))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SixbqStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SixbqStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (SixbqStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (SixbqStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn field_from(n: usize, re: &[f64], im: &[f64]) -> sixbq::Result<FourierField> {
    FourierField::from_coeffs(n, re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect())
}

/// Message for the last failing call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn sixbq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sixbq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `ω_k = sqrt(k² + βk⁴ + k⁶)`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_omega(k: i64, beta: i32, out: *mut f64) -> SixbqStatus {
    guard(|| {
        let w = lib(omega(k, beta_of(beta)?))?;
        *out.as_mut().ok_or_else(|| null("out"))? = w;
        Ok(())
    })
}

/// Creates a state from `2N+1` coefficients per array, ordered `k = -N..=N`.
///
/// # Safety
/// Each array must hold `2n + 1` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_state_new(
    n: usize,
    u_re: *const f64,
    u_im: *const f64,
    v_re: *const f64,
    v_im: *const f64,
    out: *mut *mut SixbqState,
) -> SixbqStatus {
    guard(|| {
        let len = 2 * n + 1;
        let u = lib(field_from(n, slice(u_re, len, "u_re")?, slice(u_im, len, "u_im")?))?;
        let v = lib(field_from(n, slice(v_re, len, "v_re")?, slice(v_im, len, "v_im")?))?;
        put(out, SixbqState(lib(StateVector::new(u, v))?))
    })
}

/// Truncation order `N`, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sixbq_state_max_mode(state: *const SixbqState) -> usize {
    state.as_ref().map_or(0, |s| s.0.max_mode())
}

/// Copies the coefficients into caller arrays of length `2N+1`.
///
/// # Safety
/// `state` must be live; each array must hold `2N + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sixbq_state_coeffs(
    state: *const SixbqState,
    u_re: *mut f64,
    u_im: *mut f64,
    v_re: *mut f64,
    v_im: *mut f64,
) -> SixbqStatus {
    guard(|| {
        let s = &as_ref(state, "state")?.0;
        let len = 2 * s.max_mode() + 1;
        let outs = [
            slice_mut(u_re, len, "u_re")?,
            slice_mut(u_im, len, "u_im")?,
            slice_mut(v_re, len, "v_re")?,
            slice_mut(v_im, len, "v_im")?,
        ];
        let [ur, ui, vr, vi] = outs;
        for (i, (cu, cv)) in s.u.coeffs().iter().zip(s.v.coeffs()).enumerate() {
            ur[i] = cu.re;
            ui[i] = cu.im;
            vr[i] = cv.re;
            vi[i] = cv.im;
        }
        Ok(())
    })
}

/// `E = π Σ (|v_k|² + ω_k²|u_k|²)`.
///
/// # Safety
/// `state` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_state_energy(state: *const SixbqState, beta: i32, out: *mut f64) -> SixbqStatus {
    guard(|| {
        let s = &as_ref(state, "state")?.0;
        let e = sixbq::stabilization::energy(s, &LinearSymbol::standard(beta_of(beta)?));
        *out.as_mut().ok_or_else(|| null("out"))? = e;
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sixbq_state_free(state: *mut SixbqState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// `kind`: 0 uniform, 1 raised cosine.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_profile_builtin(kind: i32, out: *mut *mut SixbqProfile) -> SixbqStatus {
    guard(|| {
        let g = match kind {
            0 => GProfile::uniform(),
            1 => GProfile::raised_cosine(),
            _ => return Err((SixbqStatus::InvalidArgument, format!("unknown profile kind {kind}"))),
        };
        put(out, SixbqProfile(g))
    })
}

/// Validated custom profile from `2N+1` coefficients ordered `k = -N..=N`.
///
/// # Safety
/// Both arrays must hold `2n + 1` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_profile_custom(
    n: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut SixbqProfile,
) -> SixbqStatus {
    guard(|| {
        let len = 2 * n + 1;
        let f = lib(field_from(n, slice(re, len, "re")?, slice(im, len, "im")?))?;
        put(out, SixbqProfile(lib(GProfile::custom(f))?))
    })
}

/// # Safety
/// `g` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sixbq_profile_free(g: *mut SixbqProfile) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Synthesizes the linear control steering `initial` to `terminal` in time `t_horizon`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_control_linear(
    initial: *const SixbqState,
    terminal: *const SixbqState,
    profile: *const SixbqProfile,
    t_horizon: f64,
    beta: i32,
    out: *mut *mut SixbqControl,
) -> SixbqStatus {
    guard(|| {
        let (a, b) = (&as_ref(initial, "initial")?.0, &as_ref(terminal, "terminal")?.0);
        let mut cfg = ControlConfig::new(t_horizon, beta_of(beta)?);
        cfg.g = as_ref(profile, "profile")?.0.clone();
        let lc = lib(k_t(a, b, &cfg))?;
        put(
            out,
            SixbqControl {
                terminal_error: lc.report.terminal_error,
                control_norm: lc.report.control_norm,
                signal: lc.signal,
            },
        )
    })
}

/// Relative terminal `X^s` error of the verification run, or NaN for null.
///
/// # Safety
/// `control` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sixbq_control_terminal_error(control: *const SixbqControl) -> f64 {
    control.as_ref().map_or(f64::NAN, |c| c.terminal_error)
}

/// `‖h‖_{L²(0,T; H^s)}`, or NaN for null.
///
/// # Safety
/// `control` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sixbq_control_norm(control: *const SixbqControl) -> f64 {
    control.as_ref().map_or(f64::NAN, |c| c.control_norm)
}

/// Coefficients of `h(t)`, `k = -N..=N`, into arrays of length `2N+1`.
///
/// # Safety
/// `control` must be live; both arrays must hold `2N + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sixbq_control_eval(
    control: *const SixbqControl,
    t: f64,
    re: *mut f64,
    im: *mut f64,
) -> SixbqStatus {
    guard(|| {
        let c = as_ref(control, "control")?;
        let h = c.signal.eval(t);
        let len = h.coeffs().len();
        let (re, im) = (slice_mut(re, len, "re")?, slice_mut(im, len, "im")?);
        for (i, z) in h.coeffs().iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `control` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sixbq_control_free(control: *mut SixbqControl) {
    if !control.is_null() {
        drop(Box::from_raw(control));
    }
}

/// Runs the damped loop `u_tt + ... = -K G u_t` and returns its energy series.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_stabilize(
    initial: *const SixbqState,
    profile: *const SixbqProfile,
    gain: f64,
    t_final: f64,
    dt: f64,
    beta: i32,
    nonlinear: bool,
    out: *mut *mut SixbqEnergySeries,
) -> SixbqStatus {
    guard(|| {
        let w0 = &as_ref(initial, "initial")?.0;
        let g = &as_ref(profile, "profile")?.0;
        let opts = ClosedLoopOptions::new(gain, t_final, dt, beta_of(beta)?).nonlinear(nonlinear);
        let (_, series) = lib(evolve_closed_loop(w0, g, &opts))?;
        put(out, SixbqEnergySeries(series))
    })
}

/// Number of samples, or 0 for null.
///
/// # Safety
/// `series` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn sixbq_series_len(series: *const SixbqEnergySeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.times.len())
}

/// Copies times, energies and `X^0` distances into arrays of `len` doubles.
///
/// # Safety
/// `series` must be live; each non-null array must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sixbq_series_copy(
    series: *const SixbqEnergySeries,
    times: *mut f64,
    energy: *mut f64,
    distance: *mut f64,
    len: usize,
) -> SixbqStatus {
    guard(|| {
        let s = &as_ref(series, "series")?.0;
        if len != s.times.len() {
            return Err((SixbqStatus::InvalidArgument, format!("len {len} != {}", s.times.len())));
        }
        for (dst, src) in [(times, &s.times), (energy, &s.energy), (distance, &s.distance)] {
            if !dst.is_null() {
                slice_mut(dst, len, "array")?.copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// Log-linear fit of the energy on `[0.1 T, T]`.
///
/// # Safety
/// `series` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sixbq_series_energy_fit(series: *const SixbqEnergySeries, out: *mut SixbqDecayFit) -> SixbqStatus {
    guard(|| {
        let s = &as_ref(series, "series")?.0;
        let f = lib(decay_fit(&s.times, &s.energy, default_window(&s.times)))?;
        *out.as_mut().ok_or_else(|| null("out"))? = SixbqDecayFit {
            gamma_hat: f.gamma_hat,
            c_hat: f.c_hat,
            r_squared: f.r_squared,
            window_start: f.window.0,
            window_end: f.window.1,
        };
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sixbq_series_free(series: *mut SixbqEnergySeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}
