//! Linear flow `u_tt = u_xx - βu_xxxx + u_xxxxxx`: eigensystem, exact group,
//! Duhamel solutions and mean conservation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etd::{apply2, oscillator_matrix};
use crate::quad::QuadratureRule;
use crate::spectral::{
    equiv_weight, spatial_derivative, xs_norm, Beta, FourierField, NormConvention, SobolevIndex,
    StateVector, C64, I, ZERO,
};

/// Per-mode symbol `ω_k² = a k² + βk⁴ + k⁶`; `a = 1` for the original equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSymbol {
    pub beta: Beta,
    pub k2_coeff: f64,
}

impl LinearSymbol {
    pub fn standard(beta: Beta) -> Self {
        LinearSymbol { beta, k2_coeff: 1.0 }
    }

    pub fn omega_sq(&self, k: i64) -> f64 {
        let k2 = (k * k) as f64;
        self.k2_coeff * k2 + self.beta.value() * k2 * k2 + k2 * k2 * k2
    }

    pub fn matrix(&self, k: i64, t: f64) -> [[f64; 2]; 2] {
        oscillator_matrix(self.omega_sq(k), t)
    }
}

/// `ω_k = √(k²(k⁴+βk²+1))`.
pub fn omega(k: i64, beta: Beta) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "omega is undefined at k = 0 (Jordan block)".into(),
        ));
    }
    Ok(LinearSymbol::standard(beta).omega_sq(k).sqrt())
}

/// `λ_n = i sign(n) ω_|n|`.
pub fn eigenvalue(n: i64, beta: Beta) -> Result<C64> {
    Ok(I * (n.signum() as f64) * omega(n, beta)?)
}

pub fn propagate_mode(k: i64, pair: (C64, C64), t: f64, beta: Beta) -> (C64, C64) {
    apply2(&LinearSymbol::standard(beta).matrix(k, t), pair)
}

pub fn w_group_with(symbol: &LinearSymbol, w: &StateVector, t: f64) -> StateVector {
    let mut out = w.clone();
    let n = w.max_mode() as i64;
    for k in -n..=n {
        out.set_mode(k, apply2(&symbol.matrix(k, t), w.mode(k)));
    }
    out
}

/// `W(t) w`.
pub fn w_group(w: &StateVector, t: f64, beta: Beta) -> StateVector {
    w_group_with(&LinearSymbol::standard(beta), w, t)
}

/// `A w = (v, u_xx - βu_xxxx + u_xxxxxx)` with a general `k²` coefficient.
pub fn apply_generator(w: &StateVector, symbol: &LinearSymbol) -> StateVector {
    let d2 = spatial_derivative(&w.u, 2).scale(symbol.k2_coeff);
    let d4 = spatial_derivative(&w.u, 4).scale(symbol.beta.value());
    let d6 = spatial_derivative(&w.u, 6);
    StateVector {
        u: w.v.clone(),
        v: &(&d2 - &d4) + &d6,
    }
}

/// An eigenvector supported on a single Fourier mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeVector {
    pub mode: i64,
    pub u: C64,
    pub v: C64,
}

impl ModeVector {
    pub fn to_state(&self, n: usize) -> StateVector {
        let mut w = StateVector::zeros(n);
        w.set_mode(self.mode, (self.u, self.v));
        w
    }
}

/// Eigenpair data for one frequency index `n ≠ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisMode {
    pub n: i64,
    pub omega: f64,
    pub lambda: C64,
    /// `φ_{1,n}`, supported on mode `n`.
    pub phi1: ModeVector,
    /// `φ_{2,n}`, supported on mode `-n`.
    pub phi2: ModeVector,
    /// Normalization constants `m_{1,n}`, `m_{2,n}`.
    pub norms: [f64; 2],
}

impl BasisMode {
    pub fn phi(&self, j: usize) -> &ModeVector {
        if j == 1 {
            &self.phi1
        } else {
            &self.phi2
        }
    }
}

/// Eigenvalues and `X^s`-orthonormal eigenvectors of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeBasis {
    pub beta: Beta,
    pub n: usize,
    pub s: SobolevIndex,
    /// Ordered `n = -N..=-1, 1..=N`.
    pub modes: Vec<BasisMode>,
}

pub fn build_basis(n: usize, beta: Beta, s: SobolevIndex) -> Result<ModeBasis> {
    if n == 0 {
        return Err(Error::InvalidParameter("basis needs N >= 1".into()));
    }
    let ni = n as i64;
    let s3 = s.shift(3.0)?;
    let mut modes = Vec::with_capacity(2 * n);
    for k in (-ni..=ni).filter(|&k| k != 0) {
        let om = omega(k, beta)?;
        let lambda = I * (k.signum() as f64) * om;
        let make = |mode: i64| {
            let c = 1.0 / (mode as f64).powi(3);
            let m = (c * c * (equiv_weight(mode, beta, s3) + om * om * equiv_weight(mode, beta, s))).sqrt();
            (
                ModeVector {
                    mode,
                    u: C64::new(c / m, 0.0),
                    v: lambda * (c / m),
                },
                m,
            )
        };
        let (phi1, m1) = make(k);
        let (phi2, m2) = make(-k);
        modes.push(BasisMode {
            n: k,
            omega: om,
            lambda,
            phi1,
            phi2,
            norms: [m1, m2],
        });
    }
    Ok(ModeBasis { beta, n, s, modes })
}

/// Expansion coefficients `α_0`, `α_{1,n}`, `α_{2,n}` in basis order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalCoefficients {
    pub alpha0: C64,
    pub alpha: Vec<[C64; 2]>,
}

impl ModeBasis {
    pub fn index_of(&self, n: i64) -> Option<usize> {
        let ni = self.n as i64;
        match n {
            0 => None,
            _ if n.abs() > ni => None,
            _ if n < 0 => Some((n + ni) as usize),
            _ => Some((n + ni - 1) as usize),
        }
    }

    pub fn mode(&self, n: i64) -> Option<&BasisMode> {
        self.index_of(n).map(|i| &self.modes[i])
    }

    pub fn frequencies(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn phi0(&self) -> StateVector {
        let mut w = StateVector::zeros(self.n);
        w.u.set(0, C64::new(1.0, 0.0));
        w
    }

    pub fn eigenvector(&self, j: usize, n: i64) -> Result<StateVector> {
        let m = self
            .mode(n)
            .ok_or_else(|| Error::InvalidParameter(format!("no basis mode n = {n}")))?;
        if !(j == 1 || j == 2) {
            return Err(Error::InvalidParameter(format!("eigenvector family must be 1 or 2, got {j}")));
        }
        Ok(m.phi(j).to_state(self.n))
    }

    /// All basis vectors: `φ_0` first, then `φ_{1,n}, φ_{2,n}` in basis order.
    pub fn all_vectors(&self) -> Vec<StateVector> {
        let mut out = vec![self.phi0()];
        for m in &self.modes {
            out.push(m.phi1.to_state(self.n));
            out.push(m.phi2.to_state(self.n));
        }
        out
    }

    /// `max |⟨φ_a, φ_b⟩ - δ_ab|` over the full family, by dense summation.
    pub fn gram_deviation(&self) -> f64 {
        let vecs = self.all_vectors();
        let ni = self.n as i64;
        let s3 = SobolevIndex::new(self.s.value() + 3.0).expect("nonnegative");
        let wu: Vec<f64> = (-ni..=ni).map(|k| equiv_weight(k, self.beta, s3)).collect();
        let wv: Vec<f64> = (-ni..=ni).map(|k| equiv_weight(k, self.beta, self.s)).collect();
        let mut dev: f64 = 0.0;
        for (a, va) in vecs.iter().enumerate() {
            for (b, vb) in vecs.iter().enumerate().skip(a) {
                let mut acc = ZERO;
                for i in 0..wu.len() {
                    acc += va.u.coeffs()[i] * vb.u.coeffs()[i].conj() * wu[i];
                    acc += va.v.coeffs()[i] * vb.v.coeffs()[i].conj() * wv[i];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((acc - target).norm());
            }
        }
        dev
    }

    /// `max ‖Aφ - λφ‖ / (|λ|‖φ‖)` with `A` applied through spectral derivatives.
    pub fn eigen_residual(&self) -> f64 {
        let symbol = LinearSymbol::standard(self.beta);
        let mut worst: f64 = 0.0;
        let phi0 = self.phi0();
        worst = worst.max(self.norm(&apply_generator(&phi0, &symbol)));
        for m in &self.modes {
            for j in 1..=2 {
                let phi = m.phi(j).to_state(self.n);
                let aphi = apply_generator(&phi, &symbol);
                let r = &aphi - &phi.scale_c(m.lambda);
                worst = worst.max(self.norm(&r) / (m.lambda.norm() * self.norm(&phi)));
            }
        }
        worst
    }

    fn norm(&self, w: &StateVector) -> f64 {
        xs_norm(w, self.s, NormConvention::Equivalent, self.beta)
    }

    /// `det L_k = -2λ_k/k³` for the matrix of unnormalized eigenvector pairs on mode `k`.
    pub fn det_l(&self, k: i64) -> Result<C64> {
        let lambda = eigenvalue(k.abs(), self.beta)?;
        Ok(lambda * -2.0 / (k.abs() as f64).powi(3))
    }

    pub fn project(&self, w: &StateVector) -> Result<ModalCoefficients> {
        project_state(w, self)
    }
}

fn single_mode_inner(w: &StateVector, phi: &ModeVector, beta: Beta, s: SobolevIndex) -> C64 {
    let s3 = SobolevIndex::new(s.value() + 3.0).expect("nonnegative");
    let (u, v) = w.mode(phi.mode);
    u * phi.u.conj() * equiv_weight(phi.mode, beta, s3) + v * phi.v.conj() * equiv_weight(phi.mode, beta, s)
}

/// Coefficients `α = ⟨w, φ⟩` in the equivalent `X^s` inner product.
///
/// `α_0` is the mean of `u`. The `v_0` component lies outside the span of the
/// eigenvectors and is dropped.
pub fn project_state(w: &StateVector, basis: &ModeBasis) -> Result<ModalCoefficients> {
    if w.max_mode() > basis.n {
        return Err(Error::Dimension(format!(
            "state has N = {} but basis has N = {}",
            w.max_mode(),
            basis.n
        )));
    }
    let w = w.resized(basis.n);
    let alpha = basis
        .modes
        .iter()
        .map(|m| {
            [
                single_mode_inner(&w, &m.phi1, basis.beta, basis.s),
                single_mode_inner(&w, &m.phi2, basis.beta, basis.s),
            ]
        })
        .collect();
    Ok(ModalCoefficients {
        alpha0: w.u.coeff(0),
        alpha,
    })
}

pub fn reconstruct(coeffs: &ModalCoefficients, basis: &ModeBasis) -> Result<StateVector> {
    if coeffs.alpha.len() != basis.modes.len() {
        return Err(Error::Dimension("coefficient count does not match basis".into()));
    }
    let mut w = StateVector::zeros(basis.n);
    w.u.set(0, coeffs.alpha0);
    for (m, a) in basis.modes.iter().zip(&coeffs.alpha) {
        for (phi, aj) in [(&m.phi1, a[0]), (&m.phi2, a[1])] {
            let (u, v) = w.mode(phi.mode);
            w.set_mode(phi.mode, (u + aj * phi.u, v + aj * phi.v));
        }
    }
    Ok(w)
}

/// `W(T)w_0 + ∫₀ᵀ W(T-τ) f(τ) dτ` with `f` sampled at `T·i/(n-1)`.
pub fn duhamel_forced(
    w0: &StateVector,
    forcing: &[StateVector],
    t_final: f64,
    symbol: &LinearSymbol,
    rule: QuadratureRule,
) -> Result<StateVector> {
    if forcing.is_empty() {
        return Err(Error::Empty("forcing grid is empty".into()));
    }
    if forcing.len() < 2 {
        return Err(Error::Empty("forcing grid must cover [0, T] with at least two samples".into()));
    }
    let n = w0.max_mode();
    if forcing.iter().any(|f| f.max_mode() != n) {
        return Err(Error::Dimension("forcing samples must share N with the state".into()));
    }
    let h = t_final / (forcing.len() - 1) as f64;
    let weights = rule.weights(forcing.len(), h)?;
    let mut out = w_group_with(symbol, w0, t_final);
    for (i, (f, wt)) in forcing.iter().zip(&weights).enumerate() {
        let tau = i as f64 * h;
        let pushed = w_group_with(symbol, f, t_final - tau);
        out.axpy(C64::new(*wt, 0.0), &pushed)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max_t |[u_t](t) - [u_t](0)|`.
    pub ut_drift: f64,
    /// `max_t |[u](t) - [u](0) - t[u_t](0)|`.
    pub u_affine_deviation: f64,
}

impl ConservationReport {
    pub fn max(&self) -> f64 {
        self.ut_drift.max(self.u_affine_deviation)
    }
}

pub fn conservation_check(times: &[f64], states: &[StateVector]) -> Result<ConservationReport> {
    if times.len() != states.len() {
        return Err(Error::Dimension("times and states differ in length".into()));
    }
    let Some(first) = states.first() else {
        return Ok(ConservationReport::default());
    };
    let (t0, u0, v0) = (times[0], first.u.coeff(0), first.v.coeff(0));
    let mut rep = ConservationReport::default();
    for (t, w) in times.iter().zip(states) {
        rep.ut_drift = rep.ut_drift.max((w.v.coeff(0) - v0).norm());
        rep.u_affine_deviation = rep
            .u_affine_deviation
            .max((w.u.coeff(0) - u0 - v0 * (t - t0)).norm());
    }
    Ok(rep)
}

/// Spectral table and basis diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub beta: Beta,
    pub n: usize,
    pub s: f64,
    pub omegas: Vec<(i64, f64)>,
    pub gram_deviation: f64,
    pub eigen_residual: f64,
    /// `(k, |det L_k + 2i|)`.
    pub det_gap: Vec<(i64, f64)>,
    /// Smallest `k₀` with `|det L_k + 2i|` strictly decreasing for `k ≥ k₀`.
    pub det_monotone_from: Option<i64>,
}

pub fn spectrum_diagnostics(basis: &ModeBasis) -> Result<SpectrumDiagnostics> {
    let ni = basis.n as i64;
    let omegas = (1..=ni).map(|k| Ok((k, omega(k, basis.beta)?))).collect::<Result<Vec<_>>>()?;
    let det_gap = (1..=ni)
        .map(|k| Ok((k, (basis.det_l(k)? + C64::new(0.0, 2.0)).norm())))
        .collect::<Result<Vec<_>>>()?;
    let mut from = Some(ni);
    for i in (0..det_gap.len().saturating_sub(1)).rev() {
        if det_gap[i + 1].1 < det_gap[i].1 {
            from = Some(det_gap[i].0);
        } else {
            break;
        }
    }
    if det_gap.len() < 2 {
        from = None;
    }
    Ok(SpectrumDiagnostics {
        beta: basis.beta,
        n: basis.n,
        s: basis.s.value(),
        omegas,
        gram_deviation: basis.gram_deviation(),
        eigen_residual: basis.eigen_residual(),
        det_gap,
        det_monotone_from: from,
    })
}

/// Builds a field from per-mode values on `1 ≤ |k| ≤ N`; mode 0 is left empty.
pub fn field_from_nonzero_modes(n: usize, f: impl Fn(i64) -> C64) -> FourierField {
    FourierField::from_fn(n, |k| if k == 0 { ZERO } else { f(k) })
}
