//! Deterministic initial and terminal data.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::build_basis;
use crate::spectral::{
    equiv_weight, xs_norm, Beta, FourierField, NormConvention, SobolevIndex, StateVector, C64,
};

fn normal_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Real field with `c_k = z_k · profile(k)` for `1 ≤ k ≤ N` and `c_{-k} = conj(c_k)`.
fn random_real_field(n: usize, rng: &mut ChaCha8Rng, profile: impl Fn(i64) -> f64) -> FourierField {
    let mut f = FourierField::zeros(n);
    for k in 1..=n as i64 {
        let c = normal_c(rng) * profile(k);
        f.set(k, c);
        f.set(-k, c.conj());
    }
    f
}

fn rescale(w: StateVector, target: f64, s: SobolevIndex, beta: Beta) -> StateVector {
    let norm = xs_norm(&w.without_mean(), s, NormConvention::Equivalent, beta);
    if norm > 0.0 {
        let mut out = w.scale(target / norm);
        out.u.set(0, w.u.coeff(0));
        out
    } else {
        w
    }
}

/// Zero-mean-velocity state whose norm is spread evenly over all modes,
/// scaled to `‖(u - [u], v)‖_{X^s} = amplitude`.
pub fn random_admissible(
    n: usize,
    beta: Beta,
    s: SobolevIndex,
    amplitude: f64,
    mean: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StateVector> {
    let s3 = s.shift(3.0)?;
    let u = random_real_field(n, rng, |k| equiv_weight(k, beta, s3).sqrt().recip());
    let v = random_real_field(n, rng, |k| equiv_weight(k, beta, s).sqrt().recip());
    let mut w = rescale(StateVector::new(u, v)?, amplitude, s, beta);
    w.u.set(0, C64::new(mean, 0.0));
    Ok(w)
}

/// Smooth state with `|c_k| ~ (1+k)^{-decay}` in `u` and `v ~ ω_k (1+k)^{-decay}`,
/// scaled to `‖(u - [u], v)‖_{X^0} = amplitude`.
pub fn random_smooth(
    n: usize,
    beta: Beta,
    amplitude: f64,
    decay: f64,
    mean: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StateVector> {
    let u = random_real_field(n, rng, |k| (1.0 + k as f64).powf(-decay - 3.0));
    let v = random_real_field(n, rng, |k| (1.0 + k as f64).powf(-decay));
    let mut w = rescale(StateVector::new(u, v)?, amplitude, SobolevIndex::ZERO, beta);
    w.u.set(0, C64::new(mean, 0.0));
    Ok(w)
}

/// Named data presets used by configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `u = amplitude·cos(mode x) + mean`, `v = velocity·cos(mode x)`.
    Cosine {
        mode: i64,
        amplitude: f64,
        #[serde(default)]
        velocity: f64,
        #[serde(default)]
        mean: f64,
    },
    /// Real part of `amplitude · φ_{j,n}` plus its reflection, i.e. a standing eigenmode.
    Eigenmode {
        family: usize,
        n: i64,
        amplitude: f64,
    },
    RandomSmooth {
        amplitude: f64,
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        stream: u64,
    },
    RandomAdmissible {
        amplitude: f64,
        #[serde(default)]
        mean: f64,
        #[serde(default)]
        stream: u64,
    },
    /// Explicit `(k, re, im)` triples; missing modes are zero.
    Coefficients {
        u: Vec<(i64, f64, f64)>,
        #[serde(default)]
        v: Vec<(i64, f64, f64)>,
    },
}

fn default_decay() -> f64 {
    2.0
}

impl StateSpec {
    /// Builds the state. Random presets draw from a stream derived from `seed`
    /// and the preset's `stream` index.
    pub fn build(&self, n: usize, beta: Beta, s: SobolevIndex, seed: u64) -> Result<StateVector> {
        use rand::SeedableRng;
        let rng_for = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        match self {
            StateSpec::Zero => Ok(StateVector::zeros(n)),
            StateSpec::Constant { value } => StateVector::new(FourierField::constant(n, *value), FourierField::zeros(n)),
            StateSpec::Cosine {
                mode,
                amplitude,
                velocity,
                mean,
            } => {
                if mode.unsigned_abs() as usize > n {
                    return Err(Error::Dimension(format!("mode {mode} exceeds N = {n}")));
                }
                let mut u = FourierField::cosine(n, *mode, *amplitude);
                u.set(0, u.coeff(0) + *mean);
                StateVector::new(u, FourierField::cosine(n, *mode, *velocity))
            }
            StateSpec::Eigenmode { family, n: k, amplitude } => {
                let basis = build_basis(n, beta, s)?;
                let phi = basis.eigenvector(*family, *k)?;
                let mut w = phi.scale(*amplitude);
                w = (&w + &StateVector { u: conj_reflect(&w.u), v: conj_reflect(&w.v) }).scale(0.5);
                Ok(w)
            }
            StateSpec::RandomSmooth {
                amplitude,
                decay,
                mean,
                stream,
            } => random_smooth(n, beta, *amplitude, *decay, *mean, &mut rng_for(*stream)),
            StateSpec::RandomAdmissible { amplitude, mean, stream } => {
                random_admissible(n, beta, s, *amplitude, *mean, &mut rng_for(*stream))
            }
            StateSpec::Coefficients { u, v } => {
                StateVector::new(FourierField::from_triples_with_n(n, u)?, FourierField::from_triples_with_n(n, v)?)
            }
        }
    }
}

/// `c_k ← conj(c_{-k})`, the coefficients of the complex conjugate field.
fn conj_reflect(f: &FourierField) -> FourierField {
    FourierField::from_fn(f.max_mode(), |k| f.coeff(-k).conj())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn admissible_is_real_unit_and_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let s = SobolevIndex::new(1.0).unwrap();
        let a = random_admissible(8, Beta::Plus, s, 1.0, 0.3, &mut r1).unwrap();
        let b = random_admissible(8, Beta::Plus, s, 1.0, 0.3, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(a.reality_defect() == 0.0);
        assert_eq!(a.v.coeff(0), C64::new(0.0, 0.0));
        assert_eq!(a.u.coeff(0).re, 0.3);
        let norm = xs_norm(&a.without_mean(), s, NormConvention::Equivalent, Beta::Plus);
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigenmode_preset_is_real() {
        let spec = StateSpec::Eigenmode { family: 1, n: 2, amplitude: 0.1 };
        let w = spec.build(4, Beta::Minus, SobolevIndex::ZERO, 0).unwrap();
        assert!(w.reality_defect() < 1e-16);
        assert!(w.u.coeff(2).norm() > 0.0);
    }

    #[test]
    fn spec_round_trip() {
        let spec = StateSpec::RandomSmooth { amplitude: 0.01, decay: 2.0, mean: 0.0, stream: 3 };
        let text = toml::to_string(&spec).unwrap();
        let back: StateSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
