//! Damping feedback `f = -K G u_t`: energy, dissipation identity, decay fits,
//! the variation-of-parameters identity for `W_K`, the mean shift and the
//! differentiated systems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{duhamel_forced, w_group_with, LinearSymbol};
use crate::nonlinear::{evolve, EvolveOptions, Trajectory};
use crate::quad::QuadratureRule;
use crate::spectral::{
    mean_value, spatial_derivative, x0_norm, Beta, FourierField, GOperator, GProfile, Grid, StateVector, C64,
};

/// `E = ½∫ u_t² + a u_x² + βu_xx² + u_xxx² dx = π Σ_k (|v_k|² + ω_k²|u_k|²)`.
pub fn energy(w: &StateVector, symbol: &LinearSymbol) -> f64 {
    let n = w.max_mode() as i64;
    PI * (-n..=n)
        .map(|k| {
            let (u, v) = w.mode(k);
            v.norm_sqr() + symbol.omega_sq(k) * u.norm_sqr()
        })
        .sum::<f64>()
}

/// Energy of the modes `±k`.
pub fn mode_energy(w: &StateVector, symbol: &LinearSymbol, k: i64) -> f64 {
    let ks: &[i64] = if k == 0 { &[0] } else { &[k, -k] };
    PI * ks
        .iter()
        .map(|&m| {
            let (u, v) = w.mode(m);
            v.norm_sqr() + symbol.omega_sq(m) * u.norm_sqr()
        })
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// `‖(u - [u], u_t)‖_{X^0}`; the mean of `u` is conserved by the loop.
    pub distance: Vec<f64>,
}

impl EnergySeries {
    pub fn from_trajectory(traj: &Trajectory, symbol: &LinearSymbol) -> Self {
        EnergySeries {
            times: traj.times.clone(),
            energy: traj.states.iter().map(|w| energy(w, symbol)).collect(),
            distance: traj
                .states
                .iter()
                .map(|w| x0_norm(&w.without_mean(), traj.meta.beta))
                .collect(),
        }
    }

    /// `max_i (E_{i+1} - E_i)`, positive when energy ever grows.
    pub fn max_increase(&self) -> f64 {
        self.energy.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at the sample closest to `t`.
    pub fn energy_at(&self, t: f64) -> Option<f64> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.energy[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares line through `(t, ln y)` on `window`; `γ̂ = -slope`.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension("times and values differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - 1e-12 && **t <= window.1 + 1e-12)
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Fit(format!("fewer than two samples in window {window:?}")));
    }
    if let Some((t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::Fit(format!("nonpositive value {y} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1.ln() - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::Fit("window contains a single time".into()));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy <= 1e-24 * n * my.abs().max(1.0).powi(2) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        gamma_hat: -slope,
        c_hat: intercept.exp(),
        r_squared,
        window,
    })
}

/// Default window `[0.1 T, T]`.
pub fn default_window(times: &[f64]) -> (f64, f64) {
    let t = times.last().copied().unwrap_or(0.0);
    (0.1 * t, t)
}

#[derive(Clone, Debug)]
pub struct ClosedLoopOptions {
    pub gain: f64,
    pub t_final: f64,
    pub dt: f64,
    pub symbol: LinearSymbol,
    pub nonlinear: bool,
    pub record_every: usize,
}

impl ClosedLoopOptions {
    pub fn new(gain: f64, t_final: f64, dt: f64, beta: Beta) -> Self {
        ClosedLoopOptions {
            gain,
            t_final,
            dt,
            symbol: LinearSymbol::standard(beta),
            nonlinear: false,
            record_every: 1,
        }
    }

    pub fn nonlinear(mut self, on: bool) -> Self {
        self.nonlinear = on;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn with_symbol(mut self, symbol: LinearSymbol) -> Self {
        self.symbol = symbol;
        self
    }

    fn evolve_options(&self) -> EvolveOptions {
        let mut o = EvolveOptions::new(self.t_final, self.dt, self.symbol.beta)
            .with_symbol(self.symbol)
            .with_record_every(self.record_every);
        o.nonlinear = self.nonlinear;
        if self.gain != 0.0 {
            o = o.with_feedback(self.gain);
        }
        o
    }
}

pub fn evolve_closed_loop(w0: &StateVector, g: &GProfile, opts: &ClosedLoopOptions) -> Result<(Trajectory, EnergySeries)> {
    let scale = w0.u.max_abs().max(w0.v.max_abs()).max(1.0);
    if w0.v.coeff(0).norm() > 1e-12 * scale {
        return Err(Error::constraint(
            "zero_mean_velocity",
            format!(
                "feedback stabilization requires [u_t](0) = 0, got {:.3e}",
                w0.v.coeff(0).norm()
            ),
        ));
    }
    if !(opts.gain >= 0.0) {
        return Err(Error::InvalidParameter(format!("gain K must be >= 0, got {}", opts.gain)));
    }
    g.validate()?;
    let ev = evolve(w0, g, None, &opts.evolve_options())?;
    let series = EnergySeries::from_trajectory(&ev.trajectory, &opts.symbol);
    Ok((ev.trajectory, series))
}

/// `D(t) = ∫_S g (v - ∫g v)² dx`, exact on a grid with `M > 2N + N_g`.
pub struct DissipationRate {
    grid: Grid,
    g_samples: Vec<f64>,
    n: usize,
}

impl DissipationRate {
    pub fn new(g: &GProfile, n: usize) -> Result<Self> {
        let grid = Grid::with_min_size(2 * n + g.max_mode())?;
        let g_samples = grid.to_grid(g.field())?;
        Ok(DissipationRate { grid, g_samples, n })
    }

    pub fn eval(&self, v: &FourierField) -> Result<f64> {
        let vs = self.grid.to_grid(&v.resized(self.n))?;
        let h = 2.0 * PI / self.grid.size() as f64;
        let c: f64 = vs.iter().zip(&self.g_samples).map(|(v, g)| v * g).sum::<f64>() * h;
        Ok(vs
            .iter()
            .zip(&self.g_samples)
            .map(|(v, g)| g * (v - c) * (v - c))
            .sum::<f64>()
            * h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    /// `E(T) - E(0)`.
    pub lhs: f64,
    /// `-K ∫₀ᵀ ∫_S g (u_t - ∫g u_t)² dx dt`.
    pub rhs: f64,
    /// `|lhs - rhs| / max(E(0), 1e-300)`.
    pub relative: f64,
}

pub fn dissipation_residual(
    traj: &Trajectory,
    gain: f64,
    g: &GProfile,
    rule: QuadratureRule,
) -> Result<DissipationReport> {
    if traj.len() < 2 {
        return Err(Error::Empty("dissipation identity needs at least two samples".into()));
    }
    let symbol = LinearSymbol {
        beta: traj.meta.beta,
        k2_coeff: traj.meta.k2_coeff,
    };
    let rate = DissipationRate::new(g, traj.meta.n)?;
    let d = traj
        .states
        .iter()
        .map(|w| rate.eval(&w.v))
        .collect::<Result<Vec<_>>>()?;
    let weights = rule.weights(d.len(), traj.record_dt())?;
    let integral: f64 = weights.iter().zip(&d).map(|(w, d)| w * d).sum();
    let e0 = energy(&traj.states[0], &symbol);
    let e1 = energy(traj.last(), &symbol);
    let lhs = e1 - e0;
    let rhs = -gain * integral;
    Ok(DissipationReport {
        lhs,
        rhs,
        relative: (lhs - rhs).abs() / e0.max(1e-300),
    })
}

/// One-period energy ratios `E((k+1)P)/E(kP)` and the geometric-decay check
/// `E(kP) ≤ r̂^k E(0)(1 + tol)` with `r̂` the largest ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodContraction {
    pub period: f64,
    pub ratios: Vec<f64>,
    pub r_hat: f64,
    pub geometric_bound_holds: bool,
}

pub fn period_contraction(series: &EnergySeries, period: f64, tol: f64) -> Result<PeriodContraction> {
    let t_end = series.times.last().copied().unwrap_or(0.0);
    let periods = (t_end / period + 1e-9).floor() as usize;
    if periods < 1 {
        return Err(Error::InvalidParameter("series shorter than one period".into()));
    }
    let e: Vec<f64> = (0..=periods)
        .map(|k| series.energy_at(k as f64 * period).expect("nonempty"))
        .collect();
    let ratios: Vec<f64> = e.windows(2).map(|p| p[1] / p[0]).collect();
    let r_hat = ratios.iter().copied().fold(0.0, f64::max);
    let geometric_bound_holds = e
        .iter()
        .enumerate()
        .all(|(k, ek)| *ek <= r_hat.powi(k as i32) * e[0] * (1.0 + tol));
    Ok(PeriodContraction {
        period,
        ratios,
        r_hat,
        geometric_bound_holds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WkIdentityReport {
    /// `‖W_K(t)w_0 - (W(t)w_0 - K∫W(t-τ)(0, G v_K)dτ)‖_{X^0} / ‖w_0‖_{X^0}`.
    pub residual: f64,
    pub dt: f64,
    pub samples: usize,
}

/// Checks `W_K(t)w_0 = W(t)w_0 - K ∫₀ᵗ W(t-τ) B W_K(τ)w_0 dτ` for the linear loop.
pub fn wk_identity_residual(
    w0: &StateVector,
    gain: f64,
    g: &GProfile,
    t: f64,
    dt: f64,
    beta: Beta,
) -> Result<WkIdentityReport> {
    let symbol = LinearSymbol::standard(beta);
    let opts = ClosedLoopOptions::new(gain, t, dt, beta);
    let (traj, _) = evolve_closed_loop(w0, g, &opts)?;
    let gop = GOperator::new(g, w0.max_mode())?;
    let n = w0.max_mode();
    let forcing = traj
        .states
        .iter()
        .map(|w| {
            Ok(StateVector {
                u: FourierField::zeros(n),
                v: gop.apply(&w.v)?.scale(-gain),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rhs = duhamel_forced(w0, &forcing, t, &symbol, QuadratureRule::Simpson)?;
    let lhs = traj.last();
    let norm = x0_norm(w0, beta).max(1e-300);
    Ok(WkIdentityReport {
        residual: x0_norm(&(lhs - &rhs), beta) / norm,
        dt,
        samples: traj.len(),
    })
}

/// `v = u - η` for `[u] = η`, which solves the equation with `k²` coefficient `1 - 2η`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanShift {
    pub eta: f64,
    pub shifted: StateVector,
    pub symbol: LinearSymbol,
    /// Coefficient `1 + 2η` as printed in the source display, kept for comparison.
    pub literal_k2_coeff: f64,
    pub warning: Option<String>,
}

pub fn mean_shift_transform(w0: &StateVector, beta: Beta) -> MeanShift {
    let eta = mean_value(&w0.u);
    let mut shifted = w0.clone();
    shifted.u.set(0, w0.u.coeff(0) - eta);
    let k2 = 1.0 - 2.0 * eta;
    let warning = (k2 <= 0.0).then(|| {
        format!("k² coefficient 1 - 2η = {k2} <= 0: the shifted symbol may lose positivity")
    });
    MeanShift {
        eta,
        shifted,
        symbol: LinearSymbol { beta, k2_coeff: k2 },
        literal_k2_coeff: 1.0 + 2.0 * eta,
        warning,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedShiftReport {
    pub eta: f64,
    pub k2_coeff: f64,
    /// `max_t ‖(u - η) - v‖_{X^0}` between the original and shifted runs.
    pub max_discrepancy: f64,
    pub relative_discrepancy: f64,
    pub warning: Option<String>,
}

/// Runs the original system from `w0` and the shifted system from `w0 - η`
/// with `k²` coefficient `k2_coeff`, and compares.
pub fn paired_mean_shift_run(
    w0: &StateVector,
    g: &GProfile,
    opts: &ClosedLoopOptions,
    k2_coeff: Option<f64>,
) -> Result<PairedShiftReport> {
    let beta = opts.symbol.beta;
    let shift = mean_shift_transform(w0, beta);
    let k2 = k2_coeff.unwrap_or(shift.symbol.k2_coeff);
    let orig_opts = opts.clone().with_symbol(LinearSymbol::standard(beta));
    let (orig, _) = evolve_closed_loop(w0, g, &orig_opts)?;
    let shifted_opts = opts.clone().with_symbol(LinearSymbol { beta, k2_coeff: k2 });
    let (sh, _) = evolve_closed_loop(&shift.shifted, g, &shifted_opts)?;
    let mut worst: f64 = 0.0;
    for (a, b) in orig.states.iter().zip(&sh.states) {
        let mut d = a - b;
        d.u.set(0, d.u.coeff(0) - shift.eta);
        worst = worst.max(x0_norm(&d, beta));
    }
    let scale = x0_norm(&shift.shifted, beta).max(1e-300);
    Ok(PairedShiftReport {
        eta: shift.eta,
        k2_coeff: k2,
        max_discrepancy: worst,
        relative_discrepancy: worst / scale,
        warning: shift.warning,
    })
}

/// Initial data of the differentiated loops: `v = u_t` starts from `(ψ₀, φ₁)` and
/// `w = v_t` from `(φ₁, ψ₁)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub phi1: FourierField,
    pub psi1: FourierField,
    pub mean_phi1: f64,
    pub mean_psi1: f64,
}

fn linear_operator(f: &FourierField, symbol: &LinearSymbol) -> FourierField {
    let d2 = spatial_derivative(f, 2).scale(symbol.k2_coeff);
    let d4 = spatial_derivative(f, 4).scale(symbol.beta.value());
    &(&d2 - &d4) + &spatial_derivative(f, 6)
}

pub fn bootstrap_systems(w0: &StateVector, gain: f64, g: &GProfile, beta: Beta) -> Result<Bootstrap> {
    let symbol = LinearSymbol::standard(beta);
    let gop = GOperator::new(g, w0.max_mode())?;
    let phi1 = &linear_operator(&w0.u, &symbol) - &gop.apply(&w0.v)?.scale(gain);
    let psi1 = &linear_operator(&w0.v, &symbol) - &gop.apply(&phi1)?.scale(gain);
    Ok(Bootstrap {
        mean_phi1: phi1.coeff(0).norm(),
        mean_psi1: psi1.coeff(0).norm(),
        phi1,
        psi1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCheck {
    /// `max_t ‖v(t) - u_t(t)‖_{X^0} / ‖·‖` where `v` solves the differentiated loop.
    pub direct: f64,
    /// Same against central differences of the primary `u`.
    pub finite_difference: f64,
}

pub fn bootstrap_paired_check(
    w0: &StateVector,
    gain: f64,
    g: &GProfile,
    t_final: f64,
    dt: f64,
    beta: Beta,
) -> Result<BootstrapCheck> {
    let b = bootstrap_systems(w0, gain, g, beta)?;
    let opts = ClosedLoopOptions::new(gain, t_final, dt, beta);
    let (primary, _) = evolve_closed_loop(w0, g, &opts)?;
    let v0 = StateVector::new(w0.v.clone(), b.phi1.clone())?;
    let (second, _) = evolve_closed_loop(&v0, g, &opts)?;
    let n = w0.max_mode();
    let norm_of = |f: &FourierField| {
        x0_norm(
            &StateVector {
                u: FourierField::zeros(n),
                v: f.clone(),
            },
            beta,
        )
    };
    let scale = primary
        .states
        .iter()
        .map(|w| norm_of(&w.v))
        .fold(1e-300, f64::max);
    let mut direct: f64 = 0.0;
    for (p, s) in primary.states.iter().zip(&second.states) {
        direct = direct.max(norm_of(&(&p.v - &s.u)));
    }
    let mut fd: f64 = 0.0;
    for i in 1..primary.len() - 1 {
        let h = primary.times[i + 1] - primary.times[i - 1];
        let deriv = (&primary.states[i + 1].u - &primary.states[i - 1].u).scale(1.0 / h);
        fd = fd.max(norm_of(&(&deriv - &second.states[i].u)));
    }
    Ok(BootstrapCheck {
        direct: direct / scale,
        finite_difference: fd / scale,
    })
}

/// Closed-form rate `K/(4π)` of the amplitude of a mode under uniform `g`, and
/// the damped frequency, for `u'' + (K/2π)u' + ω²u = 0`.
pub fn uniform_g_mode_rate(gain: f64, omega_sq: f64) -> (f64, Option<f64>) {
    let a = gain / (4.0 * PI);
    let wd2 = omega_sq - a * a;
    if wd2 > 0.0 {
        (a, Some(wd2.sqrt()))
    } else {
        (a - (-wd2).sqrt(), None)
    }
}

/// Per-mode fitted energy decay rates `(k, γ̂_k)`.
pub fn mode_energy_fits(traj: &Trajectory, symbol: &LinearSymbol, window: (f64, f64)) -> Result<Vec<(i64, DecayFit)>> {
    (1..=traj.meta.n as i64)
        .map(|k| {
            let e: Vec<f64> = traj.states.iter().map(|w| mode_energy(w, symbol, k)).collect();
            Ok((k, decay_fit(&traj.times, &e, window)?))
        })
        .collect()
}

/// The constant state `(η, 0)`.
pub fn equilibrium(n: usize, eta: f64) -> StateVector {
    let mut w = StateVector::zeros(n);
    w.u.set(0, C64::new(eta, 0.0));
    w
}

/// Evolves the same data with the linear group only; used as a reference.
pub fn free_reference(w0: &StateVector, t: f64, beta: Beta) -> StateVector {
    w_group_with(&LinearSymbol::standard(beta), w0, t)
}
