//! Exact controls by the moment method: dual basis of exponentials, per-mode
//! 2×2 Cramer solves, assembly of `h(x,t)`, the linear operator `K_T` and the
//! nonlinear fixed point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etd::phi1;
use crate::linear::{build_basis, conservation_check, project_state, ConservationReport, ModalCoefficients, ModeBasis};
use crate::nonlinear::{evolve, EvolveOptions, Forcing, Trajectory};
use crate::quad::CompositeGauss;
use crate::spectral::{
    equiv_weight, mean_value, xs_norm, Beta, FourierField, GOperator, GProfile, Grid, NormConvention,
    SobolevIndex, StateVector, C64, ZERO,
};

/// `∫₀ᵀ e^{λ_l t} conj(e^{λ_m t}) dt`.
pub fn gram_matrix(t_horizon: f64, freqs: &[C64]) -> Result<DMatrix<C64>> {
    if !(t_horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t_horizon}")));
    }
    if freqs.is_empty() {
        return Err(Error::Empty("no frequencies".into()));
    }
    let scale = freqs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for (i, a) in freqs.iter().enumerate() {
        for b in &freqs[i + 1..] {
            if (a - b).norm() <= 1e-13 * scale {
                return Err(Error::Singular(format!("duplicate frequency {a}; Gram matrix is singular")));
            }
        }
    }
    let l = freqs.len();
    Ok(DMatrix::from_fn(l, l, |a, b| {
        let z = freqs[a] + freqs[b].conj();
        phi1(z * t_horizon) * t_horizon
    }))
}

/// Dual family `q_k = Σ_l C_{kl} e^{λ_l t}` with `∫ q_k conj(p_l) = δ_{kl}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBasis {
    pub t_horizon: f64,
    pub freqs: Vec<C64>,
    #[serde(skip)]
    pub gram: DMatrix<C64>,
    #[serde(skip)]
    pub coeffs: DMatrix<C64>,
    pub condition_number: f64,
    /// `max |∫ q_k conj(p_l) dt - δ_{kl}|` by composite Gauss quadrature.
    pub duality_residual: f64,
}

fn max_pair_gap(freqs: &[C64]) -> f64 {
    let hi = freqs.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    let lo = freqs.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
    (hi - lo).max(1.0)
}

pub fn dual_basis(t_horizon: f64, freqs: &[C64], cond_threshold: f64) -> Result<DualBasis> {
    let gram = gram_matrix(t_horizon, freqs)?;
    let sv = gram.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition_number <= cond_threshold) {
        return Err(Error::IllConditioned {
            condition: condition_number,
            threshold: cond_threshold,
        });
    }
    let coeffs = gram
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Gram matrix is not invertible".into()))?;
    let mut dual = DualBasis {
        t_horizon,
        freqs: freqs.to_vec(),
        gram,
        coeffs,
        condition_number,
        duality_residual: 0.0,
    };
    dual.duality_residual = dual.measure_duality();
    Ok(dual)
}

impl DualBasis {
    fn quadrature(&self) -> CompositeGauss {
        CompositeGauss::for_oscillation(0.0, self.t_horizon, max_pair_gap(&self.freqs), 8.0)
    }

    fn measure_duality(&self) -> f64 {
        let l = self.freqs.len();
        let q = self.quadrature();
        let mut acc = DMatrix::<C64>::zeros(l, l);
        let mut p = vec![ZERO; l];
        for (t, w) in q.nodes.iter().zip(&q.weights) {
            for (pi, lam) in p.iter_mut().zip(&self.freqs) {
                *pi = (lam * t).exp();
            }
            for k in 0..l {
                let qk: C64 = (0..l).map(|m| self.coeffs[(k, m)] * p[m]).sum();
                for (j, pj) in p.iter().enumerate() {
                    acc[(k, j)] += qk * pj.conj() * *w;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for k in 0..l {
            for j in 0..l {
                let target = if k == j { 1.0 } else { 0.0 };
                worst = worst.max((acc[(k, j)] - target).norm());
            }
        }
        worst
    }
}

/// Right-hand sides `d_{j,n}` of the moment equations
/// `∫₀ᵀ e^{-λ_n t}⟨h, Gψ_{j,n}⟩ dt = d_{j,n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    pub t_horizon: f64,
    pub modes: Vec<i64>,
    pub freqs: Vec<C64>,
    pub rhs: Vec<[C64; 2]>,
}

/// `d_{j,n} = e^{-λ_n T} α^T_{j,n} - α_{j,n}`.
pub fn moment_rhs(
    alpha0: &ModalCoefficients,
    alpha_t: &ModalCoefficients,
    t_horizon: f64,
    basis: &ModeBasis,
) -> Result<MomentProblem> {
    if alpha0.alpha.len() != basis.modes.len() || alpha_t.alpha.len() != basis.modes.len() {
        return Err(Error::Dimension("coefficients do not match basis".into()));
    }
    let rhs: Vec<[C64; 2]> = basis
        .modes
        .iter()
        .zip(alpha0.alpha.iter().zip(&alpha_t.alpha))
        .map(|(m, (a0, at))| {
            let e = (-m.lambda * t_horizon).exp();
            [e * at[0] - a0[0], e * at[1] - a0[1]]
        })
        .collect();
    if rhs.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("moment right-hand side is not finite".into()));
    }
    Ok(MomentProblem {
        t_horizon,
        modes: basis.modes.iter().map(|m| m.n).collect(),
        freqs: basis.frequencies(),
        rhs,
    })
}

/// Checks `[v_0] = [v_T] = 0` and `[u_0] = [u_T]`.
pub fn check_mean_constraints(u0: &StateVector, ut: &StateVector) -> Result<()> {
    let scale = [&u0.u, &u0.v, &ut.u, &ut.v].iter().map(|f| f.max_abs()).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    if u0.max_mode() != ut.max_mode() {
        return Err(Error::Dimension("endpoints have different N".into()));
    }
    for (name, w) in [("initial", u0), ("terminal", ut)] {
        if w.v.coeff(0).norm() > tol {
            return Err(Error::constraint(
                "zero_mean_velocity",
                format!("{name} state has [u_t] = {:.3e}, must be 0", w.v.coeff(0).norm()),
            ));
        }
        if w.reality_defect() > tol {
            return Err(Error::constraint("reality", format!("{name} state is not a real field")));
        }
    }
    let (m0, mt) = (mean_value(&u0.u), mean_value(&ut.u));
    if (m0 - mt).abs() > tol {
        return Err(Error::constraint(
            "equal_means",
            format!("[u_0] = {m0} differs from [u_T] = {mt}"),
        ));
    }
    Ok(())
}

/// Larger endpoint norm in the equivalent `X^0` metric.
pub fn x0_scale(a: &StateVector, b: &StateVector, beta: Beta) -> f64 {
    let s = SobolevIndex::ZERO;
    xs_norm(a, s, NormConvention::Equivalent, beta).max(xs_norm(b, s, NormConvention::Equivalent, beta))
}

/// The 2×2 Gram matrix of control shapes `Gψ_{1,n}`, `Gψ_{2,n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeGram {
    pub n: i64,
    /// `[Gψ_{1,n}, Gψ_{2,n}]`.
    pub shapes: [FourierField; 2],
    /// `M_{ji} = ⟨Gψ_i, Gψ_j⟩`.
    pub matrix: [[C64; 2]; 2],
    pub delta: f64,
    /// `|⟨Gψ_1, Gψ_2⟩| / (‖Gψ_1‖‖Gψ_2‖)`.
    pub cross_ratio: f64,
    /// `‖(φ_{j,n})_2‖²` against which `‖Gψ_{j,n}‖²` is compared.
    pub d_n_sq: [f64; 2],
}

/// Control shape for family `j`: `ψ = w_s · (φ_{j,n})_2`, so that
/// `⟨(0, Gh), φ_{j,n}⟩_{X^s} = ⟨h, Gψ⟩`.
fn control_shape(basis: &ModeBasis, j: usize, n: i64) -> Result<FourierField> {
    let m = basis
        .mode(n)
        .ok_or_else(|| Error::InvalidParameter(format!("no basis mode n = {n}")))?;
    let phi = m.phi(j);
    let mut f = FourierField::zeros(basis.n);
    f.set(phi.mode, phi.v * equiv_weight(phi.mode, basis.beta, basis.s));
    Ok(f)
}

pub fn shape_gram(n: i64, basis: &ModeBasis, gop: &GOperator, delta_floor: f64) -> Result<ShapeGram> {
    if gop.max_mode() != basis.n {
        return Err(Error::Dimension("G operator and basis have different N".into()));
    }
    let s1 = gop.apply(&control_shape(basis, 1, n)?)?;
    let s2 = gop.apply(&control_shape(basis, 2, n)?)?;
    let shapes = [s1, s2];
    let mut matrix = [[ZERO; 2]; 2];
    for (j, row) in matrix.iter_mut().enumerate() {
        for (i, entry) in row.iter_mut().enumerate() {
            *entry = shapes[i].inner(&shapes[j])?;
        }
    }
    let delta = (matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]).re;
    let m = basis.mode(n).expect("checked above");
    let gram = ShapeGram {
        n,
        cross_ratio: matrix[0][1].norm() / (matrix[0][0].re * matrix[1][1].re).sqrt(),
        d_n_sq: [m.phi1.v.norm_sqr(), m.phi2.v.norm_sqr()],
        shapes,
        matrix,
        delta,
    };
    if !(gram.delta.abs() > delta_floor) {
        return Err(Error::Singular(format!(
            "control shapes degenerate at n = {n}: |Δ_n| = {:.3e} <= floor {delta_floor:.3e}",
            gram.delta.abs()
        )));
    }
    Ok(gram)
}

/// Solves `M c = d` per mode by Cramer's rule.
pub fn cramer_coeffs(problem: &MomentProblem, grams: &[ShapeGram]) -> Result<Vec<[C64; 2]>> {
    if grams.len() != problem.rhs.len() {
        return Err(Error::Dimension("one shape Gram per mode is required".into()));
    }
    problem
        .rhs
        .iter()
        .zip(grams)
        .map(|(d, sg)| {
            let m = &sg.matrix;
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.norm() == 0.0 {
                return Err(Error::Singular(format!("Δ_n = 0 at n = {}", sg.n)));
            }
            Ok([
                (d[0] * m[1][1] - m[0][1] * d[1]) / det,
                (m[0][0] * d[1] - m[1][0] * d[0]) / det,
            ])
        })
        .collect()
}

/// `h(x,t) = Σ_l e^{λ_l t} H_l(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub t_horizon: f64,
    pub beta: Beta,
    pub s: SobolevIndex,
    pub modes: Vec<i64>,
    /// `c_{1,n}`, `c_{2,n}` in mode order.
    pub coeffs: Vec<[C64; 2]>,
    pub rates: Vec<C64>,
    pub components: Vec<FourierField>,
    /// `‖h‖_{L²(0,T;H^s)}` with the equivalent weights.
    pub norm_l2_hs: f64,
}

pub fn assemble_control(
    coeffs: &[[C64; 2]],
    dual: &DualBasis,
    grams: &[ShapeGram],
    basis: &ModeBasis,
) -> Result<ControlSignal> {
    let l = dual.freqs.len();
    if coeffs.len() != l || grams.len() != l || basis.modes.len() != l {
        return Err(Error::Dimension("inconsistent N across control inputs".into()));
    }
    let n = basis.n;
    let s_fields: Vec<FourierField> = coeffs
        .iter()
        .zip(grams)
        .map(|(c, sg)| {
            let mut f = sg.shapes[0].scale_c(c[0]);
            f.axpy(c[1], &sg.shapes[1]).expect("same N");
            f
        })
        .collect();
    let mut components = vec![FourierField::zeros(n); l];
    for (ni, sn) in s_fields.iter().enumerate() {
        for (li, h) in components.iter_mut().enumerate() {
            let c = dual.coeffs[(ni, li)];
            if c != ZERO {
                h.axpy(c, sn)?;
            }
        }
    }
    let mut sig = ControlSignal {
        t_horizon: dual.t_horizon,
        beta: basis.beta,
        s: basis.s,
        modes: basis.modes.iter().map(|m| m.n).collect(),
        coeffs: coeffs.to_vec(),
        rates: dual.freqs.clone(),
        components,
        norm_l2_hs: 0.0,
    };
    sig.norm_l2_hs = sig.norm_closed_form(&dual.gram);
    Ok(sig)
}

impl ControlSignal {
    pub fn zero(t_horizon: f64, n: usize, beta: Beta, s: SobolevIndex) -> Self {
        ControlSignal {
            t_horizon,
            beta,
            s,
            modes: vec![],
            coeffs: vec![],
            rates: vec![ZERO],
            components: vec![FourierField::zeros(n)],
            norm_l2_hs: 0.0,
        }
    }

    pub fn max_mode(&self) -> usize {
        self.components[0].max_mode()
    }

    pub fn eval(&self, t: f64) -> FourierField {
        let mut f = FourierField::zeros(self.max_mode());
        for (mu, h) in self.rates.iter().zip(&self.components) {
            f.axpy((mu * t).exp(), h).expect("same N");
        }
        f
    }

    fn weights(&self) -> Vec<f64> {
        let ni = self.max_mode() as i64;
        (-ni..=ni).map(|k| equiv_weight(k, self.beta, self.s)).collect()
    }

    /// `Σ_k w_k Σ_{l,m} H_{l,k} conj(H_{m,k}) ∫ e^{λ_l t} conj(e^{λ_m t}) dt`.
    fn norm_closed_form(&self, gram: &DMatrix<C64>) -> f64 {
        let w = self.weights();
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let mut s = ZERO;
            for (l, hl) in self.components.iter().enumerate() {
                for (m, hm) in self.components.iter().enumerate() {
                    s += hl.coeffs()[k] * hm.coeffs()[k].conj() * gram[(l, m)];
                }
            }
            acc += wk * s.re;
        }
        acc.max(0.0).sqrt()
    }

    fn quadrature(&self) -> CompositeGauss {
        CompositeGauss::for_oscillation(0.0, self.t_horizon, max_pair_gap(&self.rates), 8.0)
    }

    /// `‖h‖_{L²(0,T;H^s)}` by composite Gauss quadrature in time.
    pub fn norm_quadrature(&self) -> f64 {
        let w = self.weights();
        let q = self.quadrature();
        let mut acc = 0.0;
        for (t, wt) in q.nodes.iter().zip(&q.weights) {
            let h = self.eval(*t);
            acc += wt * h.coeffs().iter().zip(&w).map(|(c, wk)| c.norm_sqr() * wk).sum::<f64>();
        }
        acc.sqrt()
    }

    /// `max |∫₀ᵀ e^{-λ_n t}⟨h, Gψ_{j,n}⟩ dt - d_{j,n}|` by quadrature.
    pub fn moment_residual(&self, problem: &MomentProblem, grams: &[ShapeGram]) -> Result<f64> {
        if grams.len() != problem.rhs.len() {
            return Err(Error::Dimension("one shape Gram per mode is required".into()));
        }
        let nl = self.rates.len();
        // b[l][(n, j)] = ⟨H_l, Gψ_{j,n}⟩
        let mut b = vec![vec![ZERO; 2 * grams.len()]; nl];
        for (l, hl) in self.components.iter().enumerate() {
            for (i, sg) in grams.iter().enumerate() {
                for j in 0..2 {
                    b[l][2 * i + j] = hl.inner(&sg.shapes[j])?;
                }
            }
        }
        let mut all = self.rates.clone();
        all.extend(problem.freqs.iter().copied());
        let q = CompositeGauss::for_oscillation(0.0, problem.t_horizon, max_pair_gap(&all), 8.0);
        let mut acc = vec![ZERO; 2 * grams.len()];
        let mut e = vec![ZERO; nl];
        for (t, wt) in q.nodes.iter().zip(&q.weights) {
            for (el, mu) in e.iter_mut().zip(&self.rates) {
                *el = (mu * t).exp();
            }
            for (i, lam) in problem.freqs.iter().enumerate() {
                let damp = (-lam * t).exp() * *wt;
                for j in 0..2 {
                    let inner: C64 = (0..nl).map(|l| e[l] * b[l][2 * i + j]).sum();
                    acc[2 * i + j] += damp * inner;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for (i, d) in problem.rhs.iter().enumerate() {
            for j in 0..2 {
                worst = worst.max((acc[2 * i + j] - d[j]).norm());
            }
        }
        Ok(worst)
    }

    /// Forcing `G h` on the `u_t` equation.
    pub fn forcing(&self, gop: &GOperator) -> Result<Forcing> {
        Ok(Forcing::ExpSum {
            rates: self.rates.clone(),
            shapes: self.components.iter().map(|h| gop.apply(h)).collect::<Result<Vec<_>>>()?,
        })
    }

    /// `h(T - t)`.
    pub fn reversed(&self) -> ControlSignal {
        let mut r = self.clone();
        r.rates = self.rates.iter().map(|mu| -mu).collect();
        r.components = self
            .rates
            .iter()
            .zip(&self.components)
            .map(|(mu, h)| h.scale_c((mu * self.t_horizon).exp()))
            .collect();
        r
    }

    /// Samples `h(x_j, t_i)` on `n_t` uniform times and an `m`-point grid.
    /// Returns the samples and the largest imaginary part met.
    pub fn sample(&self, n_t: usize, m: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
        let grid = Grid::new(m)?;
        let mut times = Vec::with_capacity(n_t);
        let mut rows = Vec::with_capacity(n_t);
        let mut max_imag: f64 = 0.0;
        for i in 0..n_t {
            let t = if n_t > 1 {
                self.t_horizon * i as f64 / (n_t - 1) as f64
            } else {
                0.0
            };
            let z = grid.to_grid_complex(&self.eval(t))?;
            max_imag = z.iter().map(|c| c.im.abs()).fold(max_imag, f64::max);
            times.push(t);
            rows.push(z.into_iter().map(|c| c.re).collect());
        }
        Ok((times, rows, max_imag))
    }

    pub fn max_imag_on_grid(&self, n_t: usize) -> Result<f64> {
        let m = (2 * self.max_mode() + 2).next_power_of_two();
        Ok(self.sample(n_t, m)?.2)
    }

    pub fn difference_norm(&self, other: &ControlSignal) -> f64 {
        let mut combined = self.clone();
        combined.rates.extend(other.rates.iter().copied());
        combined
            .components
            .extend(other.components.iter().map(|h| h.scale(-1.0)));
        combined.norm_quadrature()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub t_horizon: f64,
    pub beta: Beta,
    pub s: SobolevIndex,
    pub g: GProfile,
    pub cond_threshold: f64,
    pub delta_floor: f64,
    /// Terminal tolerance, relative to the larger endpoint norm.
    pub tol: f64,
    /// Steps of the verification run (exact for exp-sum forcing).
    pub verify_steps: usize,
}

impl ControlConfig {
    pub fn new(t_horizon: f64, beta: Beta) -> Self {
        ControlConfig {
            t_horizon,
            beta,
            s: SobolevIndex::ZERO,
            g: GProfile::raised_cosine(),
            cond_threshold: 1e10,
            delta_floor: 1e-12,
            tol: 1e-6,
            verify_steps: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub terminal_error: f64,
    pub terminal_error_abs: f64,
    pub endpoint_scale: f64,
    pub moment_residual: f64,
    pub duality_residual: f64,
    pub condition_number: f64,
    pub control_norm: f64,
    pub control_norm_quadrature: f64,
    /// `‖h‖² / (‖u_0‖²_{X^s} + ‖u_T‖²_{X^s})`.
    pub bound_ratio: f64,
    pub max_imag: f64,
    pub conservation: ConservationReport,
    pub min_delta: f64,
    pub max_cross_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct LinearControl {
    pub signal: ControlSignal,
    pub problem: MomentProblem,
    pub grams: Vec<ShapeGram>,
    pub dual: DualBasis,
    pub basis: ModeBasis,
    pub report: ControlReport,
    pub trajectory: Trajectory,
}

/// Moment-method pieces for a fixed configuration and truncation.
pub struct ControlSynthesizer {
    pub cfg: ControlConfig,
    pub basis: ModeBasis,
    pub gop: GOperator,
    pub grams: Vec<ShapeGram>,
    pub dual: DualBasis,
}

impl ControlSynthesizer {
    pub fn new(cfg: &ControlConfig, n: usize) -> Result<Self> {
        cfg.g.validate()?;
        let basis = build_basis(n, cfg.beta, cfg.s)?;
        let gop = GOperator::new(&cfg.g, n)?;
        let grams = basis
            .modes
            .iter()
            .map(|m| shape_gram(m.n, &basis, &gop, cfg.delta_floor))
            .collect::<Result<Vec<_>>>()?;
        let dual = dual_basis(cfg.t_horizon, &basis.frequencies(), cfg.cond_threshold)?;
        Ok(ControlSynthesizer {
            cfg: cfg.clone(),
            basis,
            gop,
            grams,
            dual,
        })
    }

    pub fn problem(&self, u0: &StateVector, ut: &StateVector) -> Result<MomentProblem> {
        check_mean_constraints(u0, ut)?;
        if u0.max_mode() != self.basis.n {
            return Err(Error::Dimension(format!(
                "endpoints have N = {}, synthesizer has N = {}",
                u0.max_mode(),
                self.basis.n
            )));
        }
        let a0 = project_state(&u0.without_mean(), &self.basis)?;
        let at = project_state(&ut.without_mean(), &self.basis)?;
        moment_rhs(&a0, &at, self.cfg.t_horizon, &self.basis)
    }

    /// The control `K_T(u_0, u_T)` without the verification run.
    pub fn synthesize(&self, u0: &StateVector, ut: &StateVector) -> Result<(ControlSignal, MomentProblem)> {
        let problem = self.problem(u0, ut)?;
        let coeffs = cramer_coeffs(&problem, &self.grams)?;
        let signal = assemble_control(&coeffs, &self.dual, &self.grams, &self.basis)?;
        Ok((signal, problem))
    }

    /// Linear run under `G h` with exact exp-sum Duhamel steps.
    pub fn simulate_linear(&self, u0: &StateVector, signal: &ControlSignal, track_mu: bool, steps: usize) -> Result<crate::nonlinear::Evolution> {
        let forcing = signal.forcing(&self.gop)?;
        let dt = self.cfg.t_horizon / steps as f64;
        let mut opts = EvolveOptions::new(self.cfg.t_horizon, dt, self.cfg.beta).linear();
        opts.track_mu = track_mu;
        evolve(u0, &self.cfg.g, Some(&forcing), &opts)
    }

    pub fn k_t(&self, u0: &StateVector, ut: &StateVector) -> Result<LinearControl> {
        let (signal, problem) = self.synthesize(u0, ut)?;
        let ev = self.simulate_linear(u0, &signal, false, self.cfg.verify_steps.max(1))?;
        let beta = self.cfg.beta;
        let scale = x0_scale(u0, ut, beta);
        let err_abs = xs_norm(&(ev.trajectory.last() - ut), self.cfg.s, NormConvention::Equivalent, beta);
        let rel = if scale > 0.0 { err_abs / scale } else { err_abs };
        let xs = |w: &StateVector| xs_norm(w, self.cfg.s, NormConvention::Equivalent, beta);
        let denom = xs(&u0.without_mean()).powi(2) + xs(&ut.without_mean()).powi(2);
        let report = ControlReport {
            terminal_error: rel,
            terminal_error_abs: err_abs,
            endpoint_scale: scale,
            moment_residual: signal.moment_residual(&problem, &self.grams)?,
            duality_residual: self.dual.duality_residual,
            condition_number: self.dual.condition_number,
            control_norm: signal.norm_l2_hs,
            control_norm_quadrature: signal.norm_quadrature(),
            bound_ratio: if denom > 0.0 { signal.norm_l2_hs.powi(2) / denom } else { 0.0 },
            max_imag: signal.max_imag_on_grid(33)?,
            conservation: conservation_check(&ev.trajectory.times, &ev.trajectory.states)?,
            min_delta: self.grams.iter().map(|g| g.delta.abs()).fold(f64::INFINITY, f64::min),
            max_cross_ratio: self.grams.iter().map(|g| g.cross_ratio).fold(0.0, f64::max),
        };
        if rel > self.cfg.tol {
            return Err(Error::Verification {
                what: "linear terminal state".into(),
                achieved: rel,
                tol: self.cfg.tol,
            });
        }
        Ok(LinearControl {
            signal,
            problem,
            grams: self.grams.clone(),
            dual: self.dual.clone(),
            basis: self.basis.clone(),
            report,
            trajectory: ev.trajectory,
        })
    }
}

/// Full linear pipeline `K_T(u_0, u_T)` with verification.
pub fn k_t(u0: &StateVector, ut: &StateVector, cfg: &ControlConfig) -> Result<LinearControl> {
    ControlSynthesizer::new(cfg, u0.max_mode())?.k_t(u0, ut)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearControlConfig {
    /// Stop when successive trajectories differ by less than `tol` times the
    /// endpoint scale in sup-t `X^s`.
    pub tol: f64,
    pub max_iter: usize,
    pub dt: f64,
    pub record_every: usize,
    /// Smallness bound on endpoint `X^s` norms.
    pub delta: f64,
    /// Terminal tolerance, relative to the larger endpoint norm.
    pub terminal_tol: f64,
    /// Re-simulate the final control at `dt/2`.
    pub verify_refined: bool,
}

impl Default for NonlinearControlConfig {
    fn default() -> Self {
        NonlinearControlConfig {
            tol: 1e-9,
            max_iter: 20,
            dt: 1e-4,
            record_every: 10,
            delta: 0.1,
            terminal_tol: 1e-5,
            verify_refined: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sup-t `X^s` distance to the previous iterate, relative to the endpoint scale.
    pub difference: f64,
    pub ratio: Option<f64>,
    pub terminal_error: f64,
    pub control_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearControlReport {
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Terminal error of the final control at the working step.
    pub terminal_error: f64,
    /// Terminal error when the final control is re-simulated at `dt/2`.
    pub terminal_error_refined: Option<f64>,
    pub differences_decreasing: bool,
    pub max_ratio: f64,
    pub conservation: ConservationReport,
    pub control_norm: f64,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct NonlinearControl {
    pub signal: ControlSignal,
    pub trajectory: Trajectory,
    pub report: NonlinearControlReport,
}

/// Fixed point `h^{(m+1)} = K_T(u_0, u_T - μ(T, u^{(m)}))`.
pub fn nonlinear_exact_control(
    u0: &StateVector,
    ut: &StateVector,
    cfg: &ControlConfig,
    nl: &NonlinearControlConfig,
) -> Result<NonlinearControl> {
    let n = u0.max_mode();
    let syn = ControlSynthesizer::new(cfg, n)?;
    check_mean_constraints(u0, ut)?;
    let beta = cfg.beta;
    let xs = |w: &StateVector| xs_norm(w, cfg.s, NormConvention::Equivalent, beta);
    for (name, w) in [("initial", u0), ("terminal", ut)] {
        let norm = xs(&w.without_mean());
        if norm > nl.delta {
            return Err(Error::constraint(
                "smallness",
                format!("{name} endpoint norm {norm:.3e} exceeds delta = {:.3e}", nl.delta),
            ));
        }
    }
    let scale = x0_scale(u0, ut, beta);
    let unit = if scale > 0.0 { scale } else { 1.0 };
    let t = cfg.t_horizon;
    let opts = EvolveOptions::new(t, nl.dt, beta)
        .with_record_every(nl.record_every)
        .with_mu();
    opts.steps()?;

    let run = |signal: &ControlSignal, nonlinear: bool, o: &EvolveOptions| -> Result<crate::nonlinear::Evolution> {
        let forcing = signal.forcing(&syn.gop)?;
        let mut o = o.clone();
        o.nonlinear = nonlinear;
        evolve(u0, &cfg.g, Some(&forcing), &o)
    };

    let (h0, _) = syn.synthesize(u0, ut)?;
    let lin = run(&h0, false, &opts)?;
    let mut prev_traj = lin.trajectory;
    let mut mu = lin.mu.expect("tracked");
    let mut history = Vec::new();
    let mut signal = h0;
    let mut converged = false;
    let mut last_diff = f64::INFINITY;

    for it in 1..=nl.max_iter {
        let target = ut - &mu;
        let (h, _) = syn.synthesize(u0, &target.symmetrized())?;
        let ev = run(&h, true, &opts)?;
        let diff = ev.trajectory.sup_distance(&prev_traj, cfg.s)? / unit;
        let term = xs_norm(&(ev.trajectory.last() - ut), cfg.s, NormConvention::Equivalent, beta) / unit;
        let ratio = history
            .last()
            .map(|r: &IterationRecord| diff / r.difference);
        history.push(IterationRecord {
            iteration: it,
            difference: diff,
            ratio,
            terminal_error: term,
            control_norm: h.norm_l2_hs,
        });
        mu = ev.mu.expect("tracked");
        prev_traj = ev.trajectory;
        signal = h;
        last_diff = diff;
        if diff < nl.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: nl.max_iter,
            last_diff,
            tol: nl.tol,
        });
    }

    let terminal_error = history.last().map_or(0.0, |r| r.terminal_error);
    let terminal_error_refined = if nl.verify_refined {
        let mut fine = opts.clone();
        fine.dt = nl.dt / 2.0;
        fine.record_every = nl.record_every * 2;
        fine.track_mu = false;
        let ev = run(&signal, true, &fine)?;
        Some(xs_norm(&(ev.trajectory.last() - ut), cfg.s, NormConvention::Equivalent, beta) / unit)
    } else {
        None
    };
    let differences_decreasing = history.windows(2).all(|w| w[1].difference < w[0].difference);
    let max_ratio = history.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    let report = NonlinearControlReport {
        converged,
        iterations: history.len(),
        terminal_error,
        terminal_error_refined,
        differences_decreasing,
        max_ratio,
        conservation: conservation_check(&prev_traj.times, &prev_traj.states)?,
        control_norm: signal.norm_l2_hs,
        dt: nl.dt,
        history,
    };
    let checked = report.terminal_error_refined.unwrap_or(report.terminal_error);
    if checked > nl.terminal_tol {
        return Err(Error::Verification {
            what: "nonlinear terminal state".into(),
            achieved: checked,
            tol: nl.terminal_tol,
        });
    }
    Ok(NonlinearControl {
        signal,
        trajectory: prev_traj,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gram_examples() {
        let g = gram_matrix(0.7, &[C64::new(0.0, 3.0)]).unwrap();
        assert!((g[(0, 0)] - 0.7).norm() < 1e-15);
        let g = gram_matrix(2.0 * PI, &[C64::new(0.0, 1.0), C64::new(0.0, -1.0)]).unwrap();
        assert!((g[(0, 1)]).norm() < 1e-14);
        assert!((g[(0, 0)] - 2.0 * PI).norm() < 1e-14);
        let dup = gram_matrix(1.0, &[C64::new(0.0, 2.0), C64::new(0.0, 2.0)]);
        assert!(matches!(dup, Err(Error::Singular(_))));
    }

    #[test]
    fn dual_examples() {
        let d = dual_basis(0.5, &[C64::new(0.0, 4.0)], 1e10).unwrap();
        assert!((d.coeffs[(0, 0)] - 2.0).norm() < 1e-14);
        let freqs: Vec<C64> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&k| C64::new(0.0, k)).collect();
        let d = dual_basis(2.0 * PI, &freqs, 1e10).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 / (2.0 * PI) } else { 0.0 };
                assert!((d.coeffs[(i, j)] - expect).norm() < 1e-13);
            }
        }
        assert!(d.duality_residual < 1e-12);
    }

    #[test]
    fn ill_conditioned_is_refused() {
        let freqs: Vec<C64> = (1..=6).map(|k| C64::new(0.0, k as f64 * 1e-3)).collect();
        assert!(matches!(dual_basis(1.0, &freqs, 1e10), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn uniform_g_shape_gram_is_diagonal() {
        let basis = build_basis(4, Beta::Plus, SobolevIndex::ZERO).unwrap();
        let gop = GOperator::new(&GProfile::uniform(), 4).unwrap();
        for m in &basis.modes {
            let sg = shape_gram(m.n, &basis, &gop, 1e-12).unwrap();
            assert!(sg.matrix[0][1].norm() < 1e-16);
            let expect = sg.d_n_sq[0] / (4.0 * PI * PI);
            assert!((sg.matrix[0][0].re - expect).abs() < 1e-15);
            assert!((sg.delta - expect * expect).abs() < 1e-15);
        }
    }

    #[test]
    fn cramer_matches_dense_solve() {
        let basis = build_basis(3, Beta::Minus, SobolevIndex::ZERO).unwrap();
        let gop = GOperator::new(&GProfile::raised_cosine(), 3).unwrap();
        let grams: Vec<ShapeGram> = basis.modes.iter().map(|m| shape_gram(m.n, &basis, &gop, 1e-12).unwrap()).collect();
        let problem = MomentProblem {
            t_horizon: 1.0,
            modes: basis.modes.iter().map(|m| m.n).collect(),
            freqs: basis.frequencies(),
            rhs: (0..6).map(|i| [C64::new(i as f64, 1.0), C64::new(-0.5, i as f64 * 0.3)]).collect(),
        };
        let c = cramer_coeffs(&problem, &grams).unwrap();
        for ((ci, sg), d) in c.iter().zip(&grams).zip(&problem.rhs) {
            let m = nalgebra::Matrix2::new(sg.matrix[0][0], sg.matrix[0][1], sg.matrix[1][0], sg.matrix[1][1]);
            let x = m.lu().solve(&nalgebra::Vector2::new(d[0], d[1])).unwrap();
            assert!((x[0] - ci[0]).norm() < 1e-12 * x[0].norm().max(1.0));
            assert!((x[1] - ci[1]).norm() < 1e-12 * x[1].norm().max(1.0));
        }
    }

    #[test]
    fn zero_endpoints_zero_control() {
        let cfg = ControlConfig::new(1.0, Beta::Plus);
        let z = StateVector::zeros(4);
        let lc = k_t(&z, &z, &cfg).unwrap();
        assert_eq!(lc.signal.norm_l2_hs, 0.0);
        assert_eq!(lc.report.terminal_error, 0.0);
        let c = StateVector::new(FourierField::constant(4, 0.7), FourierField::zeros(4)).unwrap();
        let lc = k_t(&c, &c, &cfg).unwrap();
        assert_eq!(lc.signal.norm_l2_hs, 0.0);
        assert!(lc.report.terminal_error < 1e-15);
    }

    #[test]
    fn mean_constraints_are_named() {
        let cfg = ControlConfig::new(1.0, Beta::Plus);
        let a = StateVector::new(FourierField::constant(3, 1.0), FourierField::zeros(3)).unwrap();
        let b = StateVector::zeros(3);
        match k_t(&a, &b, &cfg) {
            Err(Error::Constraint { name, .. }) => assert_eq!(name, "equal_means"),
            other => panic!("{other:?}"),
        }
        let c = StateVector::new(FourierField::zeros(3), FourierField::constant(3, 0.1)).unwrap();
        match k_t(&c, &b, &cfg) {
            Err(Error::Constraint { name, .. }) => assert_eq!(name, "zero_mean_velocity"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn steers_single_mode() {
        let cfg = ControlConfig::new(1.0, Beta::Plus);
        let u0 = StateVector::new(FourierField::cosine(3, 2, 0.1), FourierField::zeros(3)).unwrap();
        let lc = k_t(&u0, &StateVector::zeros(3), &cfg).unwrap();
        assert!(lc.report.terminal_error < 1e-10, "{:?}", lc.report);
        assert!(lc.report.max_imag < 1e-12);
        assert!((lc.report.control_norm - lc.report.control_norm_quadrature).abs() < 1e-9 * lc.report.control_norm);
    }

    #[test]
    fn zero_moment_rhs_cases() {
        let basis = build_basis(3, Beta::Plus, SobolevIndex::ZERO).unwrap();
        let z = project_state(&StateVector::zeros(3), &basis).unwrap();
        let p = moment_rhs(&z, &z, 1.0, &basis).unwrap();
        assert!(p.rhs.iter().flatten().all(|d| d.norm() == 0.0));
        let w = StateVector::new(FourierField::cosine(3, 1, 0.2), FourierField::sine(3, 3, 0.05)).unwrap();
        let a0 = project_state(&w, &basis).unwrap();
        let p = moment_rhs(&a0, &z, 1.0, &basis).unwrap();
        for (d, a) in p.rhs.iter().zip(&a0.alpha) {
            assert!((d[0] + a[0]).norm() < 1e-15 && (d[1] + a[1]).norm() < 1e-15);
        }
        let free = crate::linear::w_group(&w, 1.0, Beta::Plus);
        let at = project_state(&free, &basis).unwrap();
        let p = moment_rhs(&a0, &at, 1.0, &basis).unwrap();
        assert!(p.rhs.iter().flatten().all(|d| d.norm() < 1e-13));
    }
}
