//! Nonlinear term `-(u²)_xx` and exponential time integration of the forced,
//! optionally damped, nonlinear system.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etd::{exp_forcing_increment, ModeEtd};
use crate::linear::{duhamel_forced, LinearSymbol};
use crate::quad::QuadratureRule;
use crate::spectral::{
    x0_norm, xs_norm, Beta, FourierField, GOperator, GProfile, Grid, NormConvention, SobolevIndex,
    StateVector, C64, ZERO,
};

/// Dealiased evaluation of `-(u²)_xx`.
#[derive(Clone, Debug)]
pub struct NonlinearOperator {
    n: usize,
    grid: Grid,
}

impl NonlinearOperator {
    pub fn new(n: usize) -> Result<Self> {
        Ok(NonlinearOperator {
            n,
            grid: Grid::with_min_size(3 * n)?,
        })
    }

    pub fn square(&self, u: &FourierField) -> Result<FourierField> {
        if u.max_mode() != self.n {
            return Err(Error::Dimension(format!(
                "nonlinear operator built for N = {}, field has N = {}",
                self.n,
                u.max_mode()
            )));
        }
        let s: Vec<C64> = self.grid.to_grid_complex(u)?.into_iter().map(|x| x * x).collect();
        self.grid.from_grid_complex(&s, self.n)
    }

    pub fn apply(&self, u: &FourierField) -> Result<FourierField> {
        let sq = self.square(u)?;
        Ok(sq.map_modes(|k, c| c * (k * k) as f64))
    }
}

pub fn nonlinear_term(u: &FourierField) -> Result<FourierField> {
    NonlinearOperator::new(u.max_mode())?.apply(u)
}

/// Forcing acting on the `u_t` equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Forcing {
    /// `Σ_l e^{μ_l t} F_l`, integrated exactly over each step in open loop.
    ExpSum {
        rates: Vec<C64>,
        shapes: Vec<FourierField>,
    },
    /// Uniform samples on `[0, T]` with linear interpolation between them.
    Sampled { dt: f64, samples: Vec<FourierField> },
}

impl Forcing {
    pub fn eval(&self, t: f64) -> FourierField {
        match self {
            Forcing::ExpSum { rates, shapes } => {
                let mut f = FourierField::zeros(shapes[0].max_mode());
                for (mu, shape) in rates.iter().zip(shapes) {
                    f.axpy((mu * t).exp(), shape).expect("shapes share N");
                }
                f
            }
            Forcing::Sampled { dt, samples } => {
                let x = (t / dt).max(0.0);
                let i = (x.floor() as usize).min(samples.len() - 1);
                if i + 1 >= samples.len() {
                    return samples[samples.len() - 1].clone();
                }
                let th = x - i as f64;
                &samples[i].scale(1.0 - th) + &samples[i + 1].scale(th)
            }
        }
    }

    pub fn max_mode(&self) -> usize {
        match self {
            Forcing::ExpSum { shapes, .. } => shapes.first().map_or(0, |s| s.max_mode()),
            Forcing::Sampled { samples, .. } => samples.first().map_or(0, |s| s.max_mode()),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Forcing::ExpSum { rates, shapes } => {
                if rates.len() != shapes.len() || shapes.is_empty() {
                    return Err(Error::Dimension("exp-sum forcing needs one shape per rate".into()));
                }
                if shapes.iter().any(|s| s.max_mode() != n) {
                    return Err(Error::Dimension("forcing shapes must share N with the state".into()));
                }
            }
            Forcing::Sampled { dt, samples } => {
                if samples.is_empty() {
                    return Err(Error::Empty("sampled forcing has no samples".into()));
                }
                if !(*dt > 0.0) {
                    return Err(Error::InvalidParameter("forcing sample step must be positive".into()));
                }
                if samples.iter().any(|s| s.max_mode() != n) {
                    return Err(Error::Dimension("forcing samples must share N with the state".into()));
                }
            }
        }
        Ok(())
    }
}

/// Step coefficients for a uniform step.
///
/// `Diagonal` handles the undamped flow mode by mode. `Dense` propagates the
/// damped loop `v' = -ω²u - K G v + b` exactly through a matrix exponential.
#[derive(Clone, Debug)]
pub enum Propagator {
    Diagonal(DiagonalPropagator),
    Dense(Box<DenseClosedLoop>),
}

#[derive(Clone, Debug)]
pub struct DiagonalPropagator {
    n: usize,
    modes: Vec<ModeEtd>,
}

impl DiagonalPropagator {
    pub fn new(symbol: &LinearSymbol, n: usize, dt: f64) -> Self {
        let ni = n as i64;
        DiagonalPropagator {
            n,
            modes: (-ni..=ni).map(|k| ModeEtd::new(symbol.omega_sq(k), dt)).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenseClosedLoop {
    n: usize,
    /// Nonzero modes in field index order.
    idx: Vec<usize>,
    scale: Vec<f64>,
    e: DMatrix<C64>,
    /// Columns of `Δφ₁(LΔ)` and `Δφ₂(LΔ)` that act on `v` inputs.
    p1: DMatrix<C64>,
    p2: DMatrix<C64>,
    mode0: ModeEtd,
}

impl DenseClosedLoop {
    pub fn new(symbol: &LinearSymbol, gop: &GOperator, gain: f64, dt: f64) -> Result<Self> {
        if !gop.profile().is_normalized() {
            return Err(Error::constraint(
                "g_normalization",
                "closed-loop propagation requires ∫g dx = 1",
            ));
        }
        let n = gop.max_mode();
        let ni = n as i64;
        let idx: Vec<usize> = (0..2 * n + 1).filter(|&i| i != n).collect();
        let m = idx.len();
        let gm = gop.matrix();
        let omega_sq: Vec<f64> = idx.iter().map(|&i| symbol.omega_sq(i as i64 - ni)).collect();
        let scale: Vec<f64> = omega_sq
            .iter()
            .map(|w2| if w2.abs() > 1e-12 { w2.abs().sqrt() } else { 1.0 })
            .collect();
        let d = 2 * m;
        let mut aug = DMatrix::<C64>::zeros(3 * d, 3 * d);
        for a in 0..m {
            aug[(a, m + a)] = C64::new(scale[a] * dt, 0.0);
            aug[(m + a, a)] = C64::new(-omega_sq[a] / scale[a] * dt, 0.0);
            for b in 0..m {
                aug[(m + a, m + b)] = -gm[(idx[a], idx[b])] * (gain * dt);
            }
        }
        for i in 0..d {
            aug[(i, d + i)] = C64::new(1.0, 0.0);
            aug[(d + i, 2 * d + i)] = C64::new(1.0, 0.0);
        }
        let ex = aug.exp();
        let e = ex.view((0, 0), (d, d)).into_owned();
        let p1 = ex.view((0, d + m), (d, m)).into_owned() * C64::new(dt, 0.0);
        let p2 = ex.view((0, 2 * d + m), (d, m)).into_owned() * C64::new(dt, 0.0);
        if e.iter().chain(p1.iter()).chain(p2.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Singular("closed-loop matrix exponential is not finite".into()));
        }
        Ok(DenseClosedLoop {
            n,
            idx,
            scale,
            e,
            p1,
            p2,
            mode0: ModeEtd::new(symbol.omega_sq(0), dt),
        })
    }

    fn pack(&self, w: &StateVector) -> DVector<C64> {
        let m = self.idx.len();
        DVector::from_fn(2 * m, |r, _| {
            if r < m {
                w.u.coeffs()[self.idx[r]] * self.scale[r]
            } else {
                w.v.coeffs()[self.idx[r - m]]
            }
        })
    }

    fn unpack_add(&self, y: &DVector<C64>, w: &mut StateVector) {
        let m = self.idx.len();
        for (a, &i) in self.idx.iter().enumerate() {
            w.u.coeffs_mut()[i] += y[a] / self.scale[a];
            w.v.coeffs_mut()[i] += y[m + a];
        }
    }

    fn free(&self, w: &StateVector) -> StateVector {
        let y = &self.e * self.pack(w);
        let mut out = StateVector::zeros(self.n);
        self.unpack_add(&y, &mut out);
        out.set_mode(0, self.mode0.free(w.mode(0)));
        out
    }

    fn add_input(&self, p: &DMatrix<C64>, coef: [f64; 2], w: &mut StateVector, b: &FourierField) {
        let x = DVector::from_fn(self.idx.len(), |r, _| b.coeffs()[self.idx[r]]);
        let y = p * x;
        self.unpack_add(&y, w);
        let (u0, v0) = w.mode(0);
        let b0 = b.coeff(0);
        w.set_mode(0, (u0 + b0 * coef[0], v0 + b0 * coef[1]));
    }
}

impl Propagator {
    pub fn max_mode(&self) -> usize {
        match self {
            Propagator::Diagonal(p) => p.n,
            Propagator::Dense(p) => p.n,
        }
    }

    pub fn free(&self, w: &StateVector) -> StateVector {
        match self {
            Propagator::Diagonal(p) => {
                let mut out = w.clone();
                let ni = p.n as i64;
                for (i, m) in p.modes.iter().enumerate() {
                    let k = i as i64 - ni;
                    out.set_mode(k, m.free(w.mode(k)));
                }
                out
            }
            Propagator::Dense(p) => p.free(w),
        }
    }

    fn add(&self, second: bool, w: &mut StateVector, b: &FourierField) {
        match self {
            Propagator::Diagonal(p) => {
                let ni = p.n as i64;
                for (i, m) in p.modes.iter().enumerate() {
                    let k = i as i64 - ni;
                    let c = if second { m.i2 } else { m.i1 };
                    let bk = b.coeff(k);
                    let (u, v) = w.mode(k);
                    w.set_mode(k, (u + bk * c[0], v + bk * c[1]));
                }
            }
            Propagator::Dense(p) => {
                let (mat, c) = if second {
                    (&p.p2, p.mode0.i2)
                } else {
                    (&p.p1, p.mode0.i1)
                };
                p.add_input(mat, c, w, b);
            }
        }
    }

    /// `w += ∫₀^Δ e^{L(Δ-σ)}(0, b) dσ`.
    pub fn add_i1(&self, w: &mut StateVector, b: &FourierField) {
        self.add(false, w, b);
    }

    /// `w += ∫₀^Δ e^{L(Δ-σ)}(0, b) σ/Δ dσ`.
    pub fn add_i2(&self, w: &mut StateVector, b: &FourierField) {
        self.add(true, w, b);
    }
}

/// Precomputed exact step increments for exp-sum forcing under the undamped flow.
struct ExpSumStepper {
    rates: Vec<C64>,
    /// `[l][k]` increments for `(u, v)` already multiplied by the shape coefficient.
    inc_u: Vec<Vec<C64>>,
    inc_v: Vec<Vec<C64>>,
    n: usize,
}

impl ExpSumStepper {
    fn new(symbol: &LinearSymbol, rates: &[C64], shapes: &[FourierField], dt: f64) -> Self {
        let n = shapes[0].max_mode();
        let ni = n as i64;
        let mut inc_u = Vec::with_capacity(rates.len());
        let mut inc_v = Vec::with_capacity(rates.len());
        for (mu, shape) in rates.iter().zip(shapes) {
            let mut iu = Vec::with_capacity(2 * n + 1);
            let mut iv = Vec::with_capacity(2 * n + 1);
            for k in -ni..=ni {
                let f = shape.coeff(k);
                if f == ZERO {
                    iu.push(ZERO);
                    iv.push(ZERO);
                    continue;
                }
                let (pu, pv) = exp_forcing_increment(symbol.omega_sq(k), *mu, dt);
                iu.push(pu * f);
                iv.push(pv * f);
            }
            inc_u.push(iu);
            inc_v.push(iv);
        }
        ExpSumStepper {
            rates: rates.to_vec(),
            inc_u,
            inc_v,
            n,
        }
    }

    fn increment(&self, t_next: f64) -> StateVector {
        let mut w = StateVector::zeros(self.n);
        for (l, mu) in self.rates.iter().enumerate() {
            let e = (mu * t_next).exp();
            for (i, (a, b)) in self.inc_u[l].iter().zip(&self.inc_v[l]).enumerate() {
                w.u.coeffs_mut()[i] += e * a;
                w.v.coeffs_mut()[i] += e * b;
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub beta: Beta,
    pub n: usize,
    pub dt: f64,
    pub record_every: usize,
    pub order: u32,
    pub integrator: String,
    pub k2_coeff: f64,
    pub feedback_gain: Option<f64>,
    pub nonlinear: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Sample spacing of the recorded states.
    pub fn record_dt(&self) -> f64 {
        self.meta.dt * self.meta.record_every as f64
    }

    /// `sup_t ‖a(t) - b(t)‖_{X^s}` over shared record times.
    pub fn sup_distance(&self, other: &Trajectory, s: SobolevIndex) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::Dimension("trajectories have different record grids".into()));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| xs_norm(&(a - b), s, NormConvention::Equivalent, self.meta.beta))
            .fold(0.0, f64::max))
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.states.iter().all(|w| w.reality_defect() <= tol)
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    pub symbol: LinearSymbol,
    pub nonlinear: bool,
    /// `Some(K)` closes the loop with `f = -K G u_t`.
    pub feedback_gain: Option<f64>,
    pub record_every: usize,
    /// Abort when `‖w(t)‖_{X⁰}` exceeds this factor times `max(‖w_0‖_{X⁰}, 1)`.
    pub blowup_factor: f64,
    /// Accumulate `μ(T) = ∫₀ᵀ W(T-τ)F(u(τ)) dτ` along the computed path.
    pub track_mu: bool,
}

impl EvolveOptions {
    pub fn new(t_final: f64, dt: f64, beta: Beta) -> Self {
        EvolveOptions {
            t_final,
            dt,
            symbol: LinearSymbol::standard(beta),
            nonlinear: true,
            feedback_gain: None,
            record_every: 1,
            blowup_factor: 1e6,
            track_mu: false,
        }
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn with_feedback(mut self, gain: f64) -> Self {
        self.feedback_gain = Some(gain);
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

    pub fn with_mu(mut self) -> Self {
        self.track_mu = true;
        self
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be nonnegative, got {}", self.t_final)));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} does not divide T = {}",
                self.dt, self.t_final
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub mu: Option<StateVector>,
    pub steps: usize,
}

/// Integrates `w' = Lw + (0, -(u²)_xx + f)` with a second-order exponential
/// Runge-Kutta scheme. The linear part (including feedback damping) is exact.
pub fn evolve(
    w0: &StateVector,
    g: &GProfile,
    forcing: Option<&Forcing>,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let steps = opts.steps()?;
    let n = w0.max_mode();
    if !w0.is_finite() {
        return Err(Error::InvalidParameter("initial state is not finite".into()));
    }
    if let Some(f) = forcing {
        f.validate(n)?;
    }
    let dt = opts.dt;
    let diag = DiagonalPropagator::new(&opts.symbol, n, dt);
    let prop = match opts.feedback_gain {
        Some(k) if k != 0.0 => {
            let gop = GOperator::new(g, n)?;
            Propagator::Dense(Box::new(DenseClosedLoop::new(&opts.symbol, &gop, k, dt)?))
        }
        _ => Propagator::Diagonal(diag.clone()),
    };
    let exact_sum = match (forcing, &prop) {
        (Some(Forcing::ExpSum { rates, shapes }), Propagator::Diagonal(_)) => {
            Some(ExpSumStepper::new(&opts.symbol, rates, shapes, dt))
        }
        _ => None,
    };
    let sampled = match forcing {
        Some(f) if exact_sum.is_none() => Some(f),
        _ => None,
    };
    let nl = if opts.nonlinear || opts.track_mu {
        Some(NonlinearOperator::new(n)?)
    } else {
        None
    };
    let mu_prop = Propagator::Diagonal(diag);
    let beta = opts.symbol.beta;
    let ceiling = opts.blowup_factor * x0_norm(w0, beta).max(1.0);
    let every = opts.record_every.max(1);

    let mut w = w0.clone();
    let mut mu = opts.track_mu.then(|| StateVector::zeros(n));
    let mut times = vec![0.0];
    let mut states = vec![w.clone()];
    let mut n_cur = match &nl {
        Some(op) => Some(op.apply(&w.u)?),
        None => None,
    };

    for step in 0..steps {
        let t = step as f64 * dt;
        let t_next = (step + 1) as f64 * dt;
        let mut b_n = FourierField::zeros(n);
        if opts.nonlinear {
            b_n += n_cur.as_ref().expect("nonlinear operator present");
        }
        if let Some(f) = sampled {
            b_n += &f.eval(t);
        }
        let mut a = prop.free(&w);
        prop.add_i1(&mut a, &b_n);
        if let Some(x) = &exact_sum {
            let inc = x.increment(t_next);
            a = &a + &inc;
        }
        let has_b = opts.nonlinear || sampled.is_some();
        let mut next = a.clone();
        let mut n_a = None;
        if has_b {
            let mut b_a = FourierField::zeros(n);
            if opts.nonlinear {
                let na = nl.as_ref().expect("present").apply(&a.u)?;
                b_a += &na;
                n_a = Some(na);
            }
            if let Some(f) = sampled {
                b_a += &f.eval(t_next);
            }
            prop.add_i2(&mut next, &(&b_a - &b_n));
        }
        let n_next = match &nl {
            Some(op) => Some(op.apply(&next.u)?),
            None => None,
        };
        if let Some(d) = mu.as_mut() {
            let nc = n_cur.as_ref().expect("present");
            let nn = n_a.as_ref().or(n_next.as_ref()).expect("present");
            let mut dn = mu_prop.free(d);
            mu_prop.add_i1(&mut dn, nc);
            mu_prop.add_i2(&mut dn, &(nn - nc));
            *d = dn;
        }
        w = next;
        n_cur = n_next;
        let norm = x0_norm(&w, beta);
        if !norm.is_finite() || norm > ceiling {
            return Err(Error::BlowUp {
                time: t_next,
                norm,
                ceiling,
            });
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            times.push(t_next);
            states.push(w.clone());
        }
    }

    let integrator = match (&prop, exact_sum.is_some()) {
        (Propagator::Dense(_), _) => "etd2rk-exact-damped-linear",
        (Propagator::Diagonal(_), true) => "etd2rk-exact-expsum",
        _ => "etd2rk",
    };
    Ok(Evolution {
        trajectory: Trajectory {
            times,
            states,
            meta: TrajectoryMeta {
                beta,
                n,
                dt,
                record_every: every,
                order: 2,
                integrator: integrator.into(),
                k2_coeff: opts.symbol.k2_coeff,
                feedback_gain: opts.feedback_gain,
                nonlinear: opts.nonlinear,
            },
        },
        mu,
        steps,
    })
}

/// `μ(T) = ∫₀ᵀ W(T-τ) F(u(τ)) dτ` by quadrature over the recorded states.
pub fn mu_functional(traj: &Trajectory, t_final: f64, symbol: &LinearSymbol, rule: QuadratureRule) -> Result<StateVector> {
    if traj.is_empty() {
        return Err(Error::Empty("trajectory is empty".into()));
    }
    let last = *traj.times.last().expect("nonempty");
    if (last - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "trajectory ends at {last}, not at T = {t_final}"
        )));
    }
    let n = traj.meta.n;
    let op = NonlinearOperator::new(n)?;
    let forcing = traj
        .states
        .iter()
        .map(|w| Ok(StateVector { u: FourierField::zeros(n), v: op.apply(&w.u)? }))
        .collect::<Result<Vec<_>>>()?;
    duhamel_forced(&StateVector::zeros(n), &forcing, t_final, symbol, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::w_group;

    #[test]
    fn nonlinear_term_examples() {
        assert_eq!(nonlinear_term(&FourierField::zeros(4)).unwrap().max_abs(), 0.0);
        assert!(nonlinear_term(&FourierField::constant(4, 3.0)).unwrap().max_abs() < 1e-14);
        let out = nonlinear_term(&FourierField::cosine(4, 1, 1.0)).unwrap();
        assert!((&out - &FourierField::cosine(4, 2, 2.0)).max_abs() < 1e-15);
    }

    #[test]
    fn nonlinear_matches_convolution() {
        let n = 12;
        let u = FourierField::from_fn(n, |k| {
            if k.abs() <= 4 && k != 0 {
                C64::new(1.0 / (1 + k.abs()) as f64, 0.1 * k as f64)
            } else {
                ZERO
            }
        })
        .symmetrized();
        let out = nonlinear_term(&u).unwrap();
        for k in -(n as i64)..=n as i64 {
            let mut conv = ZERO;
            for m in -(n as i64)..=n as i64 {
                conv += u.coeff(m) * u.coeff(k - m);
            }
            assert!((out.coeff(k) - conv * (k * k) as f64).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let opts = EvolveOptions::new(0.1, 0.01, Beta::Plus);
        let ev = evolve(&StateVector::zeros(4), &GProfile::raised_cosine(), None, &opts).unwrap();
        assert!(ev.trajectory.states.iter().all(|w| w.u.max_abs() == 0.0 && w.v.max_abs() == 0.0));
        assert_eq!(ev.trajectory.len(), 11);
    }

    #[test]
    fn dt_must_divide_t() {
        let opts = EvolveOptions::new(1.0, 0.3, Beta::Plus);
        assert!(matches!(
            evolve(&StateVector::zeros(2), &GProfile::uniform(), None, &opts),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn linear_evolution_is_exact() {
        let w0 = StateVector::new(FourierField::cosine(6, 2, 0.3), FourierField::sine(6, 5, 0.1)).unwrap();
        let opts = EvolveOptions::new(1.0, 0.05, Beta::Minus).linear();
        let ev = evolve(&w0, &GProfile::uniform(), None, &opts).unwrap();
        let exact = w_group(&w0, 1.0, Beta::Minus);
        assert!(x0_norm(&(ev.trajectory.last() - &exact), Beta::Minus) < 1e-12);
    }

    #[test]
    fn exp_sum_forcing_is_exact() {
        // v-forcing e^{iνt} on mode 1 against the driven-oscillator closed form.
        let beta = Beta::Minus;
        let nu = 2.0;
        let shape = FourierField::exponential(2, 1, C64::new(1.0, 0.0));
        let forcing = Forcing::ExpSum { rates: vec![C64::new(0.0, nu)], shapes: vec![shape] };
        let t_final = 1.5;
        let opts = EvolveOptions::new(t_final, 0.25, beta).linear();
        let ev = evolve(&StateVector::zeros(2), &GProfile::uniform(), Some(&forcing), &opts).unwrap();
        // ω = 1: u(t) = (e^{iνt} - cos t - iν sin t)/(1 - ν²).
        let t = t_final;
        let exact = (C64::new(0.0, nu * t).exp() - t.cos() - C64::new(0.0, nu) * t.sin()) / (1.0 - nu * nu);
        assert!((ev.trajectory.last().u.coeff(1) - exact).norm() < 1e-13);
    }

    #[test]
    fn second_order_convergence() {
        let w0 = StateVector::new(FourierField::cosine(8, 1, 0.5), FourierField::cosine(8, 2, 0.2)).unwrap();
        let run = |dt: f64| {
            let opts = EvolveOptions::new(0.5, dt, Beta::Plus);
            evolve(&w0, &GProfile::uniform(), None, &opts).unwrap().trajectory.last().clone()
        };
        let fine = run(1e-4);
        let e1 = x0_norm(&(&run(4e-3) - &fine), Beta::Plus);
        let e2 = x0_norm(&(&run(2e-3) - &fine), Beta::Plus);
        let order = (e1 / e2).log2();
        assert!(order > 1.7 && order < 2.5, "order {order}");
    }

    #[test]
    fn mu_tracking_matches_quadrature() {
        let w0 = StateVector::new(FourierField::cosine(4, 1, 0.01), FourierField::zeros(4)).unwrap();
        let opts = EvolveOptions::new(0.5, 1e-3, Beta::Plus).linear().with_mu();
        let ev = evolve(&w0, &GProfile::uniform(), None, &opts).unwrap();
        let q = mu_functional(&ev.trajectory, 0.5, &opts.symbol, QuadratureRule::Simpson).unwrap();
        let d = ev.mu.unwrap();
        assert!(x0_norm(&(&d - &q), Beta::Plus) < 1e-4 * x0_norm(&q, Beta::Plus));
    }

    #[test]
    fn blowup_is_reported() {
        let w0 = StateVector::new(FourierField::cosine(4, 1, 1.0), FourierField::zeros(4)).unwrap();
        let mut opts = EvolveOptions::new(0.01, 1e-3, Beta::Plus);
        opts.blowup_factor = 1e-3;
        assert!(matches!(evolve(&w0, &GProfile::uniform(), None, &opts), Err(Error::BlowUp { .. })));
    }
}
