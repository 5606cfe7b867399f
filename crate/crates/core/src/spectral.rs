//! Truncated Fourier fields on the periodic interval [0, 2π].
//!
//! A field is stored as `f(x) = Σ_{|k|≤N} c_k e^{ikx}`. With this convention the
//! spatial average equals `c_0`, `∫ f dx = 2π c_0`, and every norm below is a plain
//! weighted coefficient sum (no factor 2π).

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Sign of the fourth-order term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum Beta {
    Plus,
    Minus,
}

impl Beta {
    pub fn value(self) -> f64 {
        match self {
            Beta::Plus => 1.0,
            Beta::Minus => -1.0,
        }
    }

    pub fn both() -> [Beta; 2] {
        [Beta::Plus, Beta::Minus]
    }
}

impl TryFrom<i32> for Beta {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Beta::Plus),
            -1 => Ok(Beta::Minus),
            _ => Err(Error::InvalidParameter(format!("beta must be +1 or -1, got {v}"))),
        }
    }
}

impl From<Beta> for i32 {
    fn from(b: Beta) -> i32 {
        b.value() as i32
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", i32::from(*self))
    }
}

/// Nonnegative Sobolev index.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub const ZERO: SobolevIndex = SobolevIndex(0.0);

    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s >= 0.0 {
            Ok(SobolevIndex(s))
        } else {
            Err(Error::InvalidParameter(format!("Sobolev index must be finite and >= 0, got {s}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn shift(self, ds: f64) -> Result<Self> {
        SobolevIndex::new(self.0 + ds)
    }
}

impl TryFrom<f64> for SobolevIndex {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        SobolevIndex::new(s)
    }
}

impl From<SobolevIndex> for f64 {
    fn from(s: SobolevIndex) -> f64 {
        s.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormConvention {
    /// Weight `(1+|k|)^{2s}`.
    Standard,
    /// Weight `(k²(1+βk²+k⁴))^{s/3}`, with weight 1 at k = 0.
    Equivalent,
}

/// Coefficients `c_k`, `-N ≤ k ≤ N`, stored at index `k + N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, f64, f64)>", into = "Vec<(i64, f64, f64)>")]
pub struct FourierField {
    max_mode: usize,
    coeffs: Vec<C64>,
}

impl FourierField {
    pub fn zeros(n: usize) -> Self {
        FourierField {
            max_mode: n,
            coeffs: vec![ZERO; 2 * n + 1],
        }
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != 2 * n + 1 {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for N = {n}, got {}",
                2 * n + 1,
                coeffs.len()
            )));
        }
        Ok(FourierField { max_mode: n, coeffs })
    }

    pub fn from_fn(n: usize, f: impl Fn(i64) -> C64) -> Self {
        let ni = n as i64;
        FourierField {
            max_mode: n,
            coeffs: (-ni..=ni).map(f).collect(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut f = FourierField::zeros(n);
        f.set(0, C64::new(c, 0.0));
        f
    }

    /// `amp · cos(kx)`.
    pub fn cosine(n: usize, k: i64, amp: f64) -> Self {
        let mut f = FourierField::zeros(n);
        if k == 0 {
            f.set(0, C64::new(amp, 0.0));
        } else {
            f.set(k, C64::new(amp / 2.0, 0.0));
            f.set(-k, C64::new(amp / 2.0, 0.0));
        }
        f
    }

    /// `amp · sin(kx)`.
    pub fn sine(n: usize, k: i64, amp: f64) -> Self {
        let mut f = FourierField::zeros(n);
        if k != 0 {
            f.set(k, C64::new(0.0, -amp / 2.0));
            f.set(-k, C64::new(0.0, amp / 2.0));
        }
        f
    }

    /// Single exponential `c e^{ikx}`.
    pub fn exponential(n: usize, k: i64, c: C64) -> Self {
        let mut f = FourierField::zeros(n);
        f.set(k, c);
        f
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn index(&self, k: i64) -> Option<usize> {
        let n = self.max_mode as i64;
        (k.abs() <= n).then(|| (k + n) as usize)
    }

    /// Coefficient of `e^{ikx}`; zero outside the truncation.
    pub fn coeff(&self, k: i64) -> C64 {
        self.index(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Sets `c_k`; modes beyond the truncation are ignored.
    pub fn set(&mut self, k: i64, c: C64) {
        if let Some(i) = self.index(k) {
            self.coeffs[i] = c;
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        let n = self.max_mode as i64;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i64 - n, *c))
    }

    pub fn map_modes(&self, f: impl Fn(i64, C64) -> C64) -> Self {
        let n = self.max_mode as i64;
        FourierField {
            max_mode: self.max_mode,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| f(i as i64 - n, *c))
                .collect(),
        }
    }

    /// Truncates or zero-pads to a new maximum mode.
    pub fn resized(&self, n: usize) -> Self {
        FourierField::from_fn(n, |k| self.coeff(k))
    }

    /// `max_k |c_{-k} - conj(c_k)|`.
    pub fn reality_defect(&self) -> f64 {
        let n = self.max_mode as i64;
        (0..=n)
            .map(|k| (self.coeff(-k) - self.coeff(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.reality_defect() <= tol
    }

    /// Projects onto real fields: `c_k ← (c_k + conj(c_{-k}))/2`.
    pub fn symmetrized(&self) -> Self {
        self.map_modes(|k, c| (c + self.coeff(-k).conj()) * 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Σ a_k conj(b_k)`; equals `(1/2π)∫ a conj(b) dx`.
    pub fn inner(&self, other: &FourierField) -> Result<C64> {
        check_same_n(self, other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    /// `∫_S a conj(b) dx`.
    pub fn l2_inner(&self, other: &FourierField) -> Result<C64> {
        Ok(self.inner(other)? * (2.0 * PI))
    }

    /// `Σ |c_k|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.scale_c(C64::new(a, 0.0))
    }

    pub fn scale_c(&self, a: C64) -> Self {
        FourierField {
            max_mode: self.max_mode,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: C64, other: &FourierField) -> Result<()> {
        check_same_n(self, other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn to_triples(&self) -> Vec<(i64, f64, f64)> {
        self.modes().map(|(k, c)| (k, c.re, c.im)).collect()
    }

    /// Builds a field from `(k, re, im)` triples. `N` is the largest `|k|` present;
    /// missing modes are zero.
    pub fn from_triples(triples: &[(i64, f64, f64)]) -> Result<Self> {
        let n = triples.iter().map(|t| t.0.unsigned_abs() as usize).max().unwrap_or(0);
        Self::from_triples_with_n(n, triples)
    }

    pub fn from_triples_with_n(n: usize, triples: &[(i64, f64, f64)]) -> Result<Self> {
        let mut f = FourierField::zeros(n);
        for &(k, re, im) in triples {
            if k.unsigned_abs() as usize > n {
                return Err(Error::Dimension(format!("mode {k} exceeds N = {n}")));
            }
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::InvalidParameter(format!("non-finite coefficient at mode {k}")));
            }
            f.set(k, C64::new(re, im));
        }
        Ok(f)
    }
}

impl TryFrom<Vec<(i64, f64, f64)>> for FourierField {
    type Error = Error;
    fn try_from(v: Vec<(i64, f64, f64)>) -> Result<Self> {
        FourierField::from_triples(&v)
    }
}

impl From<FourierField> for Vec<(i64, f64, f64)> {
    fn from(f: FourierField) -> Self {
        f.to_triples()
    }
}

pub(crate) fn check_same_n(a: &FourierField, b: &FourierField) -> Result<()> {
    if a.max_mode != b.max_mode {
        return Err(Error::Dimension(format!(
            "fields have N = {} and N = {}",
            a.max_mode, b.max_mode
        )));
    }
    Ok(())
}

macro_rules! field_binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl $tr<&FourierField> for &FourierField {
            type Output = FourierField;
            /// Panics when the truncations differ.
            fn $m(self, rhs: &FourierField) -> FourierField {
                assert_eq!(self.max_mode, rhs.max_mode, "field truncation mismatch");
                FourierField {
                    max_mode: self.max_mode,
                    coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $tr<FourierField> for FourierField {
            type Output = FourierField;
            fn $m(self, rhs: FourierField) -> FourierField {
                (&self).$m(&rhs)
            }
        }
    };
}
field_binop!(Add, add, +);
field_binop!(Sub, sub, -);

impl AddAssign<&FourierField> for FourierField {
    fn add_assign(&mut self, rhs: &FourierField) {
        assert_eq!(self.max_mode, rhs.max_mode, "field truncation mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl SubAssign<&FourierField> for FourierField {
    fn sub_assign(&mut self, rhs: &FourierField) {
        assert_eq!(self.max_mode, rhs.max_mode, "field truncation mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl Neg for &FourierField {
    type Output = FourierField;
    fn neg(self) -> FourierField {
        self.scale(-1.0)
    }
}

impl Mul<&FourierField> for f64 {
    type Output = FourierField;
    fn mul(self, rhs: &FourierField) -> FourierField {
        rhs.scale(self)
    }
}

/// The pair `(u, u_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub u: FourierField,
    pub v: FourierField,
}

impl StateVector {
    pub fn new(u: FourierField, v: FourierField) -> Result<Self> {
        check_same_n(&u, &v)?;
        Ok(StateVector { u, v })
    }

    pub fn zeros(n: usize) -> Self {
        StateVector {
            u: FourierField::zeros(n),
            v: FourierField::zeros(n),
        }
    }

    pub fn max_mode(&self) -> usize {
        self.u.max_mode
    }

    pub fn mode(&self, k: i64) -> (C64, C64) {
        (self.u.coeff(k), self.v.coeff(k))
    }

    pub fn set_mode(&mut self, k: i64, (u, v): (C64, C64)) {
        self.u.set(k, u);
        self.v.set(k, v);
    }

    pub fn scale(&self, a: f64) -> Self {
        StateVector {
            u: self.u.scale(a),
            v: self.v.scale(a),
        }
    }

    pub fn scale_c(&self, a: C64) -> Self {
        StateVector {
            u: self.u.scale_c(a),
            v: self.v.scale_c(a),
        }
    }

    pub fn axpy(&mut self, a: C64, other: &StateVector) -> Result<()> {
        self.u.axpy(a, &other.u)?;
        self.v.axpy(a, &other.v)
    }

    pub fn resized(&self, n: usize) -> Self {
        StateVector {
            u: self.u.resized(n),
            v: self.v.resized(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn reality_defect(&self) -> f64 {
        self.u.reality_defect().max(self.v.reality_defect())
    }

    pub fn symmetrized(&self) -> Self {
        StateVector {
            u: self.u.symmetrized(),
            v: self.v.symmetrized(),
        }
    }

    /// Removes the mean of `u`, giving `(u - [u], v)`.
    pub fn without_mean(&self) -> Self {
        let mut w = self.clone();
        w.u.set(0, ZERO);
        w
    }
}

impl Add<&StateVector> for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        StateVector {
            u: &self.u + &rhs.u,
            v: &self.v + &rhs.v,
        }
    }
}

impl Sub<&StateVector> for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        StateVector {
            u: &self.u - &rhs.u,
            v: &self.v - &rhs.v,
        }
    }
}

/// Spatial average `(1/2π)∫ f dx`, which is `Re c_0` for a real field.
pub fn mean_value(f: &FourierField) -> f64 {
    f.coeff(0).re
}

/// `(k²(1+βk²+k⁴))^{s/3}`, and 1 at `k = 0`.
pub fn equiv_weight(k: i64, beta: Beta, s: SobolevIndex) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k2 = (k * k) as f64;
    (k2 * (1.0 + beta.value() * k2 + k2 * k2)).powf(s.value() / 3.0)
}

fn weight(k: i64, s: SobolevIndex, convention: NormConvention, beta: Beta) -> f64 {
    match convention {
        NormConvention::Standard => (1.0 + k.unsigned_abs() as f64).powf(2.0 * s.value()),
        NormConvention::Equivalent => equiv_weight(k, beta, s),
    }
}

pub fn sobolev_norm(f: &FourierField, s: SobolevIndex, convention: NormConvention, beta: Beta) -> f64 {
    f.modes()
        .map(|(k, c)| c.norm_sqr() * weight(k, s, convention, beta))
        .sum::<f64>()
        .sqrt()
}

/// Norm on `H^{s+3} × H^s`.
pub fn xs_norm(w: &StateVector, s: SobolevIndex, convention: NormConvention, beta: Beta) -> f64 {
    let s3 = SobolevIndex(s.value() + 3.0);
    let nu = sobolev_norm(&w.u, s3, convention, beta);
    let nv = sobolev_norm(&w.v, s, convention, beta);
    nu.hypot(nv)
}

/// Inner product inducing the equivalent `X^s` norm.
pub fn xs_inner(a: &StateVector, b: &StateVector, s: SobolevIndex, beta: Beta) -> Result<C64> {
    check_same_n(&a.u, &b.u)?;
    let s3 = SobolevIndex(s.value() + 3.0);
    let mut acc = ZERO;
    for k in -(a.max_mode() as i64)..=a.max_mode() as i64 {
        acc += a.u.coeff(k) * b.u.coeff(k).conj() * equiv_weight(k, beta, s3);
        acc += a.v.coeff(k) * b.v.coeff(k).conj() * equiv_weight(k, beta, s);
    }
    Ok(acc)
}

/// Equivalent `X^0` norm, the default error metric.
pub fn x0_norm(w: &StateVector, beta: Beta) -> f64 {
    xs_norm(w, SobolevIndex::ZERO, NormConvention::Equivalent, beta)
}

/// `c_k ← (ik)^order c_k`.
pub fn spatial_derivative(f: &FourierField, order: u32) -> FourierField {
    f.map_modes(|k, c| {
        if order == 0 {
            c
        } else {
            c * I.powu(order) * (k as f64).powi(order as i32)
        }
    })
}

/// Cached FFT plans for a uniform grid of `M` points `x_j = 2πj/M`.
#[derive(Clone)]
pub struct Grid {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("m", &self.m).finish()
    }
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Grid {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        })
    }

    /// Smallest power of two strictly above `min`.
    pub fn with_min_size(min: usize) -> Result<Self> {
        Grid::new((min + 1).next_power_of_two())
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|j| 2.0 * PI * j as f64 / self.m as f64).collect()
    }

    fn check_alias_free(&self, n: usize) -> Result<()> {
        if self.m < 2 * n + 1 {
            return Err(Error::Dimension(format!(
                "grid size {} below 2N+1 = {} for N = {n}",
                self.m,
                2 * n + 1
            )));
        }
        Ok(())
    }

    pub fn to_grid_complex(&self, f: &FourierField) -> Result<Vec<C64>> {
        self.check_alias_free(f.max_mode)?;
        let mut buf = vec![ZERO; self.m];
        for (k, c) in f.modes() {
            buf[k.rem_euclid(self.m as i64) as usize] = c;
        }
        self.inverse.process(&mut buf);
        Ok(buf)
    }

    /// Samples `f(x_j)`; the imaginary part is dropped.
    pub fn to_grid(&self, f: &FourierField) -> Result<Vec<f64>> {
        Ok(self.to_grid_complex(f)?.into_iter().map(|z| z.re).collect())
    }

    pub fn from_grid_complex(&self, samples: &[C64], n: usize) -> Result<FourierField> {
        if samples.len() != self.m {
            return Err(Error::Dimension(format!(
                "expected {} samples, got {}",
                self.m,
                samples.len()
            )));
        }
        self.check_alias_free(n)?;
        let mut buf = samples.to_vec();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.m as f64;
        Ok(FourierField::from_fn(n, |k| {
            buf[k.rem_euclid(self.m as i64) as usize] * scale
        }))
    }

    /// Coefficients `|k| ≤ n` of the trigonometric interpolant of real samples.
    pub fn from_grid(&self, samples: &[f64], n: usize) -> Result<FourierField> {
        let buf: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.from_grid_complex(&buf, n)
    }
}

pub fn to_grid(f: &FourierField, m: usize) -> Result<Vec<f64>> {
    Grid::new(m)?.to_grid(f)
}

pub fn from_grid(samples: &[f64], n: usize) -> Result<FourierField> {
    Grid::new(samples.len())?.from_grid(samples, n)
}

/// Localization profile `g`, normalized so that `∫ g dx = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GProfile {
    field: FourierField,
}

pub const G_NORMALIZATION_TOL: f64 = 1e-12;

impl GProfile {
    /// `g ≡ 1/2π`.
    pub fn uniform() -> Self {
        GProfile {
            field: FourierField::constant(0, 1.0 / (2.0 * PI)),
        }
    }

    /// `g = (1 + cos x)/2π`.
    pub fn raised_cosine() -> Self {
        let mut f = FourierField::cosine(1, 1, 1.0 / (2.0 * PI));
        f.set(0, C64::new(1.0 / (2.0 * PI), 0.0));
        GProfile { field: f }
    }

    /// Validated custom profile: real, finite, `∫g = 1`, `g ≥ 0` on a fine grid.
    pub fn custom(field: FourierField) -> Result<Self> {
        let g = GProfile { field };
        g.validate()?;
        Ok(g)
    }

    /// Skips validation. Used to build deliberately broken profiles.
    pub fn unchecked(field: FourierField) -> Self {
        GProfile { field }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.field.is_finite() {
            return Err(Error::InvalidParameter("g has non-finite coefficients".into()));
        }
        if !self.field.is_real(1e-14) {
            return Err(Error::constraint("g_reality", "g_{-k} must equal conj(g_k)"));
        }
        let integral = self.integral();
        if (integral - 1.0).abs() > G_NORMALIZATION_TOL {
            return Err(Error::constraint(
                "g_normalization",
                format!("∫g dx must be 1, got {integral}"),
            ));
        }
        let min = self.min_on_grid();
        if min < -1e-12 {
            return Err(Error::constraint(
                "g_nonnegative",
                format!("g takes negative value {min:.3e} on the grid"),
            ));
        }
        Ok(())
    }

    pub fn field(&self) -> &FourierField {
        &self.field
    }

    pub fn max_mode(&self) -> usize {
        self.field.max_mode
    }

    pub fn coeff(&self, k: i64) -> C64 {
        self.field.coeff(k)
    }

    /// `∫_S g dx = 2π Re g_0`.
    pub fn integral(&self) -> f64 {
        2.0 * PI * self.field.coeff(0).re
    }

    pub fn is_normalized(&self) -> bool {
        (self.integral() - 1.0).abs() <= G_NORMALIZATION_TOL
    }

    fn fine_samples(&self) -> Vec<f64> {
        let m = (16 * (self.field.max_mode + 1)).max(256);
        Grid::new(m)
            .and_then(|g| g.to_grid(&self.field))
            .unwrap_or_default()
    }

    pub fn min_on_grid(&self) -> f64 {
        self.fine_samples().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Sampled upper bound `g*`.
    pub fn peak(&self) -> f64 {
        self.fine_samples().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `G h = g (h - ∫ g h)` restricted to modes `|k| ≤ N`, evaluated on a grid.
#[derive(Clone, Debug)]
pub struct GOperator {
    n: usize,
    grid: Grid,
    g_samples: Vec<f64>,
    g: GProfile,
}

impl GOperator {
    pub fn new(g: &GProfile, n: usize) -> Result<Self> {
        let grid = Grid::with_min_size(2 * n + g.max_mode())?;
        let g_samples = grid.to_grid(&g.field)?;
        Ok(GOperator {
            n,
            grid,
            g_samples,
            g: g.clone(),
        })
    }

    pub fn max_mode(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> &GProfile {
        &self.g
    }

    pub fn apply(&self, h: &FourierField) -> Result<FourierField> {
        if h.max_mode != self.n {
            return Err(Error::Dimension(format!(
                "G operator built for N = {}, field has N = {}",
                self.n, h.max_mode
            )));
        }
        let mut samples = self.grid.to_grid_complex(h)?;
        let m = self.grid.size() as f64;
        let gh: C64 = samples.iter().zip(&self.g_samples).map(|(h, g)| h * g).sum::<C64>() * (2.0 * PI / m);
        for (x, g) in samples.iter_mut().zip(&self.g_samples) {
            *x = (*x - gh) * g;
        }
        self.grid.from_grid_complex(&samples, self.n)
    }

    /// Dense matrix on modes `-N..=N`: `G_{km} = g_{k-m} - 2π g_k g_{-m}`.
    pub fn matrix(&self) -> DMatrix<C64> {
        let n = self.n as i64;
        let dim = 2 * self.n + 1;
        DMatrix::from_fn(dim, dim, |r, c| {
            let k = r as i64 - n;
            let m = c as i64 - n;
            self.g.coeff(k - m) - self.g.coeff(k) * self.g.coeff(-m) * (2.0 * PI)
        })
    }
}

pub fn apply_g(h: &FourierField, g: &GProfile) -> Result<FourierField> {
    GOperator::new(g, h.max_mode)?.apply(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trapezoid(samples: &[f64]) -> f64 {
        samples.iter().sum::<f64>() * 2.0 * PI / samples.len() as f64
    }

    #[test]
    fn mean_of_constant_and_cosine() {
        assert_eq!(mean_value(&FourierField::constant(3, 2.5)), 2.5);
        assert_eq!(mean_value(&FourierField::cosine(3, 1, 1.0)), 0.0);
    }

    #[test]
    fn mean_matches_grid_quadrature() {
        let f = &FourierField::constant(4, 2.0) + &FourierField::cosine(4, 2, 3.0);
        let q = trapezoid(&to_grid(&f, 64).unwrap()) / (2.0 * PI);
        assert_abs_diff_eq!(mean_value(&f), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn equiv_weight_values() {
        let s3 = SobolevIndex::new(3.0).unwrap();
        assert_eq!(equiv_weight(0, Beta::Plus, s3), 1.0);
        assert_eq!(equiv_weight(0, Beta::Minus, SobolevIndex::new(1.7).unwrap()), 1.0);
        assert_abs_diff_eq!(equiv_weight(1, Beta::Plus, s3), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(equiv_weight(2, Beta::Minus, s3), 52.0, epsilon = 1e-12);
    }

    #[test]
    fn sobolev_norm_examples() {
        let f = FourierField::cosine(3, 1, 2.0);
        for conv in [NormConvention::Standard, NormConvention::Equivalent] {
            assert_abs_diff_eq!(
                sobolev_norm(&f, SobolevIndex::ZERO, conv, Beta::Plus),
                2f64.sqrt(),
                epsilon = 1e-15
            );
        }
        let s1 = SobolevIndex::new(1.0).unwrap();
        assert_abs_diff_eq!(
            sobolev_norm(&f, s1, NormConvention::Standard, Beta::Plus),
            2.0 * 2f64.sqrt(),
            epsilon = 1e-14
        );
        assert_eq!(sobolev_norm(&FourierField::zeros(5), s1, NormConvention::Standard, Beta::Minus), 0.0);
    }

    #[test]
    fn xs_norm_examples() {
        let z = StateVector::zeros(2);
        assert_eq!(x0_norm(&z, Beta::Plus), 0.0);
        let w = StateVector::new(FourierField::cosine(2, 1, 1.0), FourierField::zeros(2)).unwrap();
        assert_abs_diff_eq!(x0_norm(&w, Beta::Plus), 1.5f64.sqrt(), epsilon = 1e-15);
        // Quadrature oracle: ‖u‖²_{H³,equiv} = (1/2π)∫ u_x² + u_xx² + u_xxx² for β = 1.
        let grid = Grid::new(32).unwrap();
        let mut q = 0.0;
        for d in 1..=3 {
            let s = grid.to_grid(&spatial_derivative(&w.u, d)).unwrap();
            q += trapezoid(&s.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert_abs_diff_eq!(q / (2.0 * PI), 1.5, epsilon = 1e-14);
        let w = StateVector::new(FourierField::zeros(2), FourierField::cosine(2, 1, 1.0)).unwrap();
        assert_abs_diff_eq!(x0_norm(&w, Beta::Minus), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let d2 = spatial_derivative(&FourierField::cosine(3, 1, 1.0), 2);
        assert_eq!(d2, FourierField::cosine(3, 1, -1.0));
        let d3 = spatial_derivative(&FourierField::exponential(3, 2, C64::new(1.0, 0.0)), 3);
        assert_abs_diff_eq!((d3.coeff(2) - C64::new(0.0, -8.0)).norm(), 0.0, epsilon = 1e-14);
        for order in 1..4 {
            assert_eq!(spatial_derivative(&FourierField::constant(3, 4.0), order).norm_sqr(), 0.0);
        }
    }

    #[test]
    fn grid_samples_of_cosine() {
        let s = to_grid(&FourierField::cosine(2, 1, 1.0), 8).unwrap();
        for (j, x) in s.iter().enumerate() {
            assert_abs_diff_eq!(*x, (2.0 * PI * j as f64 / 8.0).cos(), epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_product_identity() {
        let grid = Grid::new(16).unwrap();
        let s: Vec<f64> = grid.to_grid(&FourierField::cosine(2, 1, 1.0)).unwrap().iter().map(|x| x * x).collect();
        let sq = grid.from_grid(&s, 2).unwrap();
        let expected = &FourierField::constant(2, 0.5) + &FourierField::cosine(2, 2, 0.5);
        assert!((&sq - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let f = FourierField::cosine(4, 1, 1.0);
        assert!(matches!(to_grid(&f, 8), Err(Error::Dimension(_))));
        assert!(matches!(from_grid(&[0.0; 8], 4), Err(Error::Dimension(_))));
    }

    #[test]
    fn g_annihilates_constants() {
        let out = apply_g(&FourierField::constant(4, 3.0), &GProfile::raised_cosine()).unwrap();
        assert!(out.max_abs() < 1e-15);
    }

    #[test]
    fn uniform_g_removes_mean() {
        let h = &FourierField::constant(3, 1.0) + &FourierField::cosine(3, 2, 2.0);
        let out = apply_g(&h, &GProfile::uniform()).unwrap();
        let expected = FourierField::cosine(3, 2, 2.0 / (2.0 * PI));
        assert!((&out - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn g_matrix_matches_pseudospectral() {
        let op = GOperator::new(&GProfile::raised_cosine(), 5).unwrap();
        let h = FourierField::from_fn(5, |k| C64::new(0.3 * k as f64 - 0.1, 0.2 / (1.0 + k.abs() as f64)));
        let a = op.apply(&h).unwrap();
        let x = nalgebra::DVector::from_column_slice(h.coeffs());
        let b = op.matrix() * x;
        for (p, q) in a.coeffs().iter().zip(b.iter()) {
            assert!((p - q).norm() < 1e-15);
        }
    }

    #[test]
    fn g_operator_dimension_mismatch() {
        let op = GOperator::new(&GProfile::raised_cosine(), 4).unwrap();
        assert!(matches!(op.apply(&FourierField::zeros(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn g_profile_validation() {
        assert!(GProfile::uniform().validate().is_ok());
        assert!(GProfile::raised_cosine().validate().is_ok());
        assert!((GProfile::raised_cosine().peak() - 1.0 / PI).abs() < 1e-14);
        let bad = FourierField::constant(0, 1.0);
        assert!(matches!(GProfile::custom(bad), Err(Error::Constraint { .. })));
        let mut neg = FourierField::cosine(1, 1, 2.0 / PI);
        neg.set(0, C64::new(1.0 / (2.0 * PI), 0.0));
        assert!(matches!(GProfile::custom(neg), Err(Error::Constraint { .. })));
    }

    #[test]
    fn triples_round_trip() {
        let f = FourierField::from_fn(3, |k| C64::new(k as f64, -(k as f64) / 2.0));
        let json = serde_json::to_string(&f).unwrap();
        let back: FourierField = serde_json::from_str(&json).unwrap();
        assert_eq!(f, back);
        assert!(json.starts_with("[[-3,"));
    }

    #[test]
    fn beta_serde() {
        assert_eq!(serde_json::to_string(&Beta::Minus).unwrap(), "-1");
        assert!(serde_json::from_str::<Beta>("2").is_err());
    }
}
