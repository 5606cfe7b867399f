//! Quadrature rules on uniform and Gauss grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Trapezoid,
    /// Composite Simpson; a 3/8 panel closes an odd interval count.
    Simpson,
}

impl QuadratureRule {
    pub fn order(self) -> u32 {
        match self {
            QuadratureRule::Trapezoid => 2,
            QuadratureRule::Simpson => 4,
        }
    }

    /// Weights for `n_points` uniform samples with spacing `h`.
    pub fn weights(self, n_points: usize, h: f64) -> Result<Vec<f64>> {
        match self {
            QuadratureRule::Trapezoid => trapezoid_weights(n_points, h),
            QuadratureRule::Simpson => simpson_weights(n_points, h),
        }
    }
}

pub fn trapezoid_weights(n_points: usize, h: f64) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::Empty("quadrature needs at least two samples".into()));
    }
    let mut w = vec![h; n_points];
    w[0] = h / 2.0;
    w[n_points - 1] = h / 2.0;
    Ok(w)
}

pub fn simpson_weights(n_points: usize, h: f64) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::Empty("quadrature needs at least two samples".into()));
    }
    let intervals = n_points - 1;
    if intervals == 1 {
        return trapezoid_weights(n_points, h);
    }
    let mut w = vec![0.0; n_points];
    let (simpson_intervals, tail) = if intervals.is_multiple_of(2) {
        (intervals, false)
    } else {
        (intervals - 3, true)
    };
    for i in (0..simpson_intervals).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if tail {
        let i = simpson_intervals;
        for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[i + j] += 3.0 * h / 8.0 * c;
        }
    }
    Ok(w)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Composite Gauss-Legendre rule on `[a, b]`: `panels` equal panels of `order` nodes.
#[derive(Clone, Debug)]
pub struct CompositeGauss {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeGauss {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let left = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(left + (xi + 1.0) * h / 2.0);
                weights.push(wi * h / 2.0);
            }
        }
        CompositeGauss { nodes, weights }
    }

    /// Panels sized so that a frequency `max_freq` is sampled at about `rad_per_panel`
    /// radians per panel.
    pub fn for_oscillation(a: f64, b: f64, max_freq: f64, rad_per_panel: f64) -> Self {
        let panels = (((b - a) * max_freq / rad_per_panel).ceil() as usize).max(4);
        CompositeGauss::new(a, b, panels, 16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn integrate(w: &[f64], f: impl Fn(f64) -> f64, h: f64) -> f64 {
        w.iter().enumerate().map(|(i, wi)| wi * f(i as f64 * h)).sum()
    }

    #[test]
    fn simpson_exact_on_cubics() {
        for n in [3, 4, 5, 6, 9, 10] {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h).unwrap();
            let got = integrate(&w, |t| t * t * t - 2.0 * t + 1.0, h);
            assert_abs_diff_eq!(got, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn simpson_order() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h).unwrap();
            (integrate(&w, f64::exp, h) - (1f64.exp() - 1.0)).abs()
        };
        let ratio = err(17) / err(33);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn too_few_points() {
        assert!(simpson_weights(1, 0.1).is_err());
        assert!(trapezoid_weights(0, 0.1).is_err());
    }

    #[test]
    fn gauss_legendre_exactness() {
        let (x, w) = gauss_legendre(16);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let m30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert_abs_diff_eq!(m30, 2.0 / 31.0, epsilon = 1e-14);
        let q = CompositeGauss::new(0.0, 3.0, 5, 8);
        let s: f64 = q.nodes.iter().zip(&q.weights).map(|(t, w)| w * t.sin()).sum();
        assert_abs_diff_eq!(s, 1.0 - 3f64.cos(), epsilon = 1e-14);
    }
}
