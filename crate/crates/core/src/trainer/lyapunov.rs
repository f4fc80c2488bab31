//! Lyapunov tracking for deterministic momentum runs.
//!
//! `V^t = 2(f_H(x^{t-1}) − f*) + c1 ‖δ^t‖² + c2 Γ^{t-1}` with `c1 = 1/(8L)`,
//! `c2 = κ/(2L)`, `δ^t = m̄^t − ∇f_H(x^{t-1})` and `Γ^{t-1}` the honest
//! dispersion of the previous momenta.

use serde::{Deserialize, Serialize};

/// Constants entering the one-step bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub l: f64,
    pub kappa: f64,
    pub g: f64,
    pub b: f64,
    pub sigma: f64,
    pub h: usize,
}

impl LyapunovParams {
    pub fn c1(&self) -> f64 {
        1.0 / (8.0 * self.l)
    }

    pub fn c2(&self) -> f64 {
        self.kappa / (2.0 * self.l)
    }

    pub fn value(&self, gap: f64, delta_sq: f64, gamma_prev: f64) -> f64 {
        2.0 * gap + self.c1() * delta_sq + self.c2() * gamma_prev
    }

    /// Upper bound on `V^{t+1}` given the quantities of step `t`.
    pub fn one_step_bound(&self, step: f64, grad_sq: f64, gap: f64, delta_sq: f64, gamma_prev: f64) -> f64 {
        let (l, k, h) = (self.l, self.kappa, self.h as f64);
        let shrink = 1.0 - step * l;
        step * (-3.0 / 8.0 + 21.0 * k * self.b * self.b) * grad_sq
            + 2.0 * gap
            + shrink * self.c1() * delta_sq
            + shrink * self.c2() * gamma_prev
            + step * step * (162.0 * l / h + 756.0 * k * l) * self.sigma * self.sigma
            + 21.0 * step * k * self.g * self.g
    }
}

/// Values and bounds collected over a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub params: LyapunovParams,
    /// `values[t-1] = V^t` for `t = 1..=T`.
    pub values: Vec<f64>,
    /// `bounds[t-1]` bounds `V^{t+1}`.
    pub bounds: Vec<f64>,
    /// Steps `t` with `V^{t+1}` above its bound.
    pub flagged: Vec<usize>,
    /// `f_H(x^0) − f*`.
    pub delta0: f64,
}

impl LyapunovTrace {
    pub(crate) fn new(params: LyapunovParams, delta0: f64) -> Self {
        Self { params, values: Vec::new(), bounds: Vec::new(), flagged: Vec::new(), delta0 }
    }

    pub(crate) fn push(&mut self, value: f64, bound: f64) {
        let t = self.values.len();
        if let Some(&prev_bound) = self.bounds.last() {
            if value > prev_bound + 1e-12 * (1.0 + prev_bound.abs()) {
                self.flagged.push(t);
            }
        }
        self.values.push(value);
        self.bounds.push(bound);
    }

    /// `V^1 <= (9/4) Δ₀` up to a relative tolerance.
    pub fn initial_bound_holds(&self, rel_tol: f64) -> bool {
        match self.values.first() {
            Some(&v1) => v1 <= 2.25 * self.delta0 * (1.0 + rel_tol) + f64::MIN_POSITIVE,
            None => true,
        }
    }
}
