//! Per-mode oscillator propagators and exponential-integrator coefficients for
//! `u'' + ω² u = b`, with `ω²` of either sign.
//!
//! All functions are written in `z = ω²Δ²` so the same code covers oscillating
//! (`z > 0`), hyperbolic (`z < 0`) and drift (`z = 0`) modes.

use crate::spectral::C64;

const SERIES_RADIUS: f64 = 4.0;
const SERIES_TERMS: usize = 40;

/// Sums `Σ_n (-z)^n a_n` where `a_n` is produced by `coef(n)`.
fn series(z: f64, coef: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    let mut zn = 1.0;
    for n in 0..SERIES_TERMS {
        let term = zn * coef(n);
        acc += term;
        if term.abs() <= 1e-18 * acc.abs() && n > 2 {
            break;
        }
        zn *= -z;
    }
    acc
}

fn inv_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a / k as f64)
}

/// `cos θ`, `θ² = z`.
pub fn cos_z(z: f64) -> f64 {
    if z >= 0.0 {
        z.sqrt().cos()
    } else {
        (-z).sqrt().cosh()
    }
}

/// `sin θ / θ`.
pub fn sinc_z(z: f64) -> f64 {
    if z.abs() <= SERIES_RADIUS {
        series(z, |n| inv_factorial(2 * n + 1))
    } else if z > 0.0 {
        let t = z.sqrt();
        t.sin() / t
    } else {
        let t = (-z).sqrt();
        t.sinh() / t
    }
}

/// `(1 - cos θ) / θ²`.
pub fn f1_z(z: f64) -> f64 {
    if z.abs() <= SERIES_RADIUS {
        series(z, |n| inv_factorial(2 * n + 2))
    } else if z > 0.0 {
        (1.0 - z.sqrt().cos()) / z
    } else {
        ((-z).sqrt().cosh() - 1.0) / -z
    }
}

/// `(sin θ - θ cos θ) / θ³`.
pub fn f3_z(z: f64) -> f64 {
    if z.abs() <= SERIES_RADIUS {
        series(z, |n| (2 * n + 2) as f64 * inv_factorial(2 * n + 3))
    } else if z > 0.0 {
        let t = z.sqrt();
        (t.sin() - t * t.cos()) / (t * z)
    } else {
        let t = (-z).sqrt();
        (t * t.cosh() - t.sinh()) / (t * -z)
    }
}

/// `(cos θ + θ sin θ - 1) / θ²`.
pub fn f4_z(z: f64) -> f64 {
    if z.abs() <= SERIES_RADIUS {
        series(z, |n| (2 * n + 1) as f64 * inv_factorial(2 * n + 2))
    } else if z > 0.0 {
        let t = z.sqrt();
        (t.cos() + t * t.sin() - 1.0) / z
    } else {
        let t = (-z).sqrt();
        (t * t.sinh() - t.cosh() + 1.0) / -z
    }
}

/// Real 2×2 propagator of `(u, v)` over time `t`.
pub fn oscillator_matrix(omega_sq: f64, t: f64) -> [[f64; 2]; 2] {
    let z = omega_sq * t * t;
    let c = cos_z(z);
    let s = t * sinc_z(z);
    [[c, s], [-omega_sq * s, c]]
}

pub fn apply2(m: &[[f64; 2]; 2], (u, v): (C64, C64)) -> (C64, C64) {
    (u * m[0][0] + v * m[0][1], u * m[1][0] + v * m[1][1])
}

/// Coefficients of one ETD2RK step of length `Δ` for a single mode.
///
/// For input `b` acting on the `v` equation:
/// `∫₀^Δ e^{A(Δ-σ)}(0,1) dσ = i1` and `∫₀^Δ e^{A(Δ-σ)}(0,1) σ/Δ dσ = i2`.
#[derive(Clone, Copy, Debug)]
pub struct ModeEtd {
    pub prop: [[f64; 2]; 2],
    pub i1: [f64; 2],
    pub i2: [f64; 2],
}

impl ModeEtd {
    pub fn new(omega_sq: f64, dt: f64) -> Self {
        let z = omega_sq * dt * dt;
        let i1 = [dt * dt * f1_z(z), dt * sinc_z(z)];
        let j = [dt * dt * f3_z(z), dt * f4_z(z)];
        ModeEtd {
            prop: oscillator_matrix(omega_sq, dt),
            i1,
            i2: [i1[0] - j[0], i1[1] - j[1]],
        }
    }

    pub fn free(&self, w: (C64, C64)) -> (C64, C64) {
        apply2(&self.prop, w)
    }
}

/// `(e^z - 1)/z`.
pub fn phi1(z: C64) -> C64 {
    if z.norm() < 0.5 {
        let mut acc = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for n in 0..30 {
            acc += term;
            term = term * z / (n + 2) as f64;
        }
        acc
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `∫₀¹ s e^{zs} ds = (e^z (z - 1) + 1)/z²`.
pub fn psi1(z: C64) -> C64 {
    if z.norm() < 0.5 {
        let mut acc = C64::new(0.0, 0.0);
        let mut zn = C64::new(1.0, 0.0);
        for n in 0..30 {
            acc += zn / (n + 2) as f64;
            zn = zn * z / (n + 1) as f64;
        }
        acc
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// `∫₀^Δ e^{Aσ}(0,1)ᵀ e^{-μσ} dσ` for the oscillator generator `A` with `ω²`.
///
/// Multiplying by `e^{μ t_{n+1}}` gives the exact Duhamel increment of a forcing
/// `e^{μt}` on the `v` equation over `[t_n, t_{n+1}]`.
pub fn exp_forcing_increment(omega_sq: f64, mu: C64, dt: f64) -> (C64, C64) {
    let omega = C64::new(omega_sq, 0.0).sqrt();
    if omega.norm() * dt < 1e-8 {
        let z = -mu * dt;
        return (psi1(z) * dt * dt, phi1(z) * dt);
    }
    let io = crate::spectral::I * omega;
    let ep = phi1((io - mu) * dt) * dt;
    let em = phi1((-io - mu) * dt) * dt;
    ((ep - em) / (io * 2.0), (ep + em) * 0.5)
}
