//! Diagonal quadratic locals and the analytic constructions built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `f(x) = Σ_k (a_k/2) x_k² + c_k x_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLocal {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl QuadraticLocal {
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != c.len() {
            return Err(Error::config(format!(
                "quadratic local needs equal, nonzero coefficient lengths (got {} and {})",
                a.len(),
                c.len()
            )));
        }
        if !a.iter().chain(&c).all(|v| v.is_finite()) {
            return Err(Error::config("quadratic coefficients must be finite"));
        }
        Ok(Self { a, c })
    }

    /// Same scalar coefficients on every coordinate.
    pub fn isotropic(a: f64, c: f64, dim: usize) -> Self {
        Self { a: vec![a; dim], c: vec![c; dim] }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.c)
            .zip(x)
            .map(|((a, c), x)| 0.5 * a * x * x + c * x)
            .sum()
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, a), c), x) in out.iter_mut().zip(&self.a).zip(&self.c).zip(x) {
            *o = a * x + c;
        }
    }

    /// Coefficient-wise mean of a non-empty list of locals.
    pub fn mean<'a>(locals: impl IntoIterator<Item = &'a QuadraticLocal>) -> QuadraticLocal {
        let mut it = locals.into_iter();
        let first = it.next().expect("mean of an empty list of locals");
        let mut a = first.a.clone();
        let mut c = first.c.clone();
        let mut count = 1.0;
        for q in it {
            a.iter_mut().zip(&q.a).for_each(|(s, v)| *s += v);
            c.iter_mut().zip(&q.c).for_each(|(s, v)| *s += v);
            count += 1.0;
        }
        a.iter_mut().for_each(|v| *v /= count);
        c.iter_mut().for_each(|v| *v /= count);
        QuadraticLocal { a, c }
    }
}

/// Parameters of the two-worker heterogeneity construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroParams {
    pub mu: f64,
    /// Curvature split `sqrt(3) B mu / 2`.
    pub delta: f64,
    /// Per-coordinate linear offset `G / (2 sqrt(d))`.
    pub epsilon: f64,
}

impl HeteroParams {
    pub fn new(mu: f64, g: f64, b: f64, dim: usize) -> Self {
        Self { mu, delta: 3f64.sqrt() * b * mu / 2.0, epsilon: g / (2.0 * (dim as f64).sqrt()) }
    }

    /// Per-coordinate minimizer of the drifted objective seen under the oracle rule.
    pub fn drifted_minimizer(&self, kappa: f64) -> f64 {
        let r = kappa.sqrt();
        r * self.epsilon / (self.mu - r * self.delta)
    }
}

/// Parameters of the two-worker noise construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub mu: f64,
    pub b: f64,
    /// Total noise level; each coordinate sees `sigma / sqrt(d)`.
    pub sigma: f64,
}

impl NoiseParams {
    pub fn sigma_per_coord(&self, dim: usize) -> f64 {
        self.sigma / (dim as f64).sqrt()
    }

    /// Per-coordinate minimizer of the expected drifted objective.
    pub fn drifted_minimizer(&self, kappa: f64, dim: usize) -> f64 {
        let r = kappa.sqrt();
        (r * self.sigma_per_coord(dim) / 2.0) / (self.mu * (1.0 - r * self.b / 2.0))
    }
}

/// Parameters of the three-group synthetic family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub k: usize,
    pub a: f64,
    /// Per-coordinate linear offset of the first two groups.
    pub c: f64,
    /// Extra curvature of the third group; grows without bound as B approaches its admissible limit.
    pub d: f64,
}

impl SyntheticParams {
    /// Solves for `c` and `d`; rejects `B² >= 2k/(n-2k)`.
    pub fn solve(n: usize, k: usize, a: f64, g: f64, b: f64, dim: usize) -> Result<Self> {
        if k == 0 || 2 * k >= n {
            return Err(Error::Construction(format!("synthetic family needs 0 < 2k < n, got n = {n}, k = {k}")));
        }
        let (nf, kf) = (n as f64, k as f64);
        let rest = nf - 2.0 * kf;
        let limit = 2.0 * kf / rest;
        if b * b >= limit {
            return Err(Error::Construction(format!(
                "B^2 = {} must be below 2k/(n-2k) = {limit}",
                b * b
            )));
        }
        let c = (nf / (2.0 * kf)).sqrt() * g / (dim as f64).sqrt();
        let d = a * b * nf / ((2.0 * kf * rest).sqrt() - rest * b);
        Ok(Self { n, k, a, c, d })
    }
}
