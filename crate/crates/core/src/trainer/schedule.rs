//! Step-size and momentum schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default momentum tie constant: `β_t = 1 − 36 γ_t L`.
pub const DEFAULT_TIE_CONSTANT: f64 = 36.0;
/// Default δ in the R-DSGD PL rate constant.
pub const DEFAULT_PL_DELTA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    Constant { gamma: f64 },
    /// `γ₀ / sqrt(T)` held constant over the whole run.
    InvSqrt { gamma0: f64 },
    /// `2/(α s₀)` for `t < ⌊T/2⌋`, then `2/(α (s₀ + t − ⌊T/2⌋))`.
    PlPiecewise { alpha: f64, s0: f64 },
    /// `γ₀` for `t < T/2`, then `γ₀ / (t + 1 − T/2)`.
    HalfDecay { gamma0: f64 },
    /// `γ₀ (1 + cos(π t / T_max)) / 2`, clamped at zero past `T_max`.
    Cosine { gamma0: f64, t_max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Momentum {
    Zero,
    Constant { beta: f64 },
    /// `β_t = 1 − c_β γ_t L`.
    Tied { c_beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub stepsize: StepSize,
    pub momentum: Momentum,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { stepsize: StepSize::Constant { gamma: 0.1 }, momentum: Momentum::Zero }
    }
}

impl StepSize {
    /// Initial step `γ₀` of a PL schedule.
    pub fn pl_gamma0(alpha: f64, s0: f64) -> f64 {
        2.0 / (alpha * s0)
    }

    pub fn at(&self, t: usize, horizon: usize) -> f64 {
        let tf = t as f64;
        match *self {
            StepSize::Constant { gamma } => gamma,
            StepSize::InvSqrt { gamma0 } => gamma0 / (horizon as f64).sqrt(),
            StepSize::PlPiecewise { alpha, s0 } => {
                let half = horizon / 2;
                if t < half {
                    2.0 / (alpha * s0)
                } else {
                    2.0 / (alpha * (s0 + (t - half) as f64))
                }
            }
            StepSize::HalfDecay { gamma0 } => {
                let half = horizon as f64 / 2.0;
                if tf < half {
                    gamma0
                } else {
                    gamma0 / (tf + 1.0 - half)
                }
            }
            StepSize::Cosine { gamma0, t_max } => {
                let frac = (tf / t_max as f64).min(1.0);
                gamma0 * (1.0 + (PI * frac).cos()) / 2.0
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSize::Constant { .. } => "constant",
            StepSize::InvSqrt { .. } => "invsqrt",
            StepSize::PlPiecewise { .. } => "pl_piecewise",
            StepSize::HalfDecay { .. } => "half_decay",
            StepSize::Cosine { .. } => "cosine",
        }
    }
}

impl ScheduleSpec {
    /// `(γ_t, β_t)` for `t ∈ [1, T]`; `l` is the smoothness constant used by tied momentum.
    pub fn at(&self, t: usize, horizon: usize, l: f64) -> (f64, f64) {
        let gamma = self.stepsize.at(t, horizon);
        let beta = match self.momentum {
            Momentum::Zero => 0.0,
            Momentum::Constant { beta } => beta,
            Momentum::Tied { c_beta } => 1.0 - c_beta * gamma * l,
        };
        (gamma, beta)
    }

    /// Checks parameter ranges and, for tied momentum, `γ_t L <= 1/c_β` at every step.
    pub fn validate(&self, horizon: usize, l: f64) -> Result<()> {
        if horizon == 0 {
            return Err(Error::config("iteration count T must be at least 1"));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("schedule {name} must be finite and > 0, got {v}")))
            }
        };
        match self.stepsize {
            StepSize::Constant { gamma } => positive("gamma", gamma)?,
            StepSize::InvSqrt { gamma0 } | StepSize::HalfDecay { gamma0 } => positive("gamma0", gamma0)?,
            StepSize::PlPiecewise { alpha, s0 } => {
                positive("alpha", alpha)?;
                if !(s0 > 2.0 && s0.is_finite()) {
                    return Err(Error::config(format!("schedule s0 must exceed 2, got {s0}")));
                }
            }
            StepSize::Cosine { gamma0, t_max } => {
                positive("gamma0", gamma0)?;
                if t_max == 0 {
                    return Err(Error::config("schedule t_max must be at least 1"));
                }
            }
        }
        match self.momentum {
            Momentum::Zero => {}
            Momentum::Constant { beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::config(format!("momentum beta must lie in [0, 1), got {beta}")));
                }
            }
            Momentum::Tied { c_beta } => {
                positive("c_beta", c_beta)?;
                // Steps are nonincreasing for every family except a rising cosine, so checking every t is cheap enough.
                for t in 1..=horizon {
                    let g = self.stepsize.at(t, horizon);
                    if g * l > 1.0 / c_beta * (1.0 + 1e-12) {
                        return Err(Error::config(format!(
                            "tied momentum requires gamma_t * L <= 1/{c_beta} (= {:.6}); step {t} has gamma_t * L = {:.6}",
                            1.0 / c_beta,
                            g * l
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rate constant of the R-DSGD PL schedule: `2μ(1/2 − 2δ − κB²(1/2 + δ))`.
pub fn rdsgd_pl_alpha(mu: f64, kappa: f64, b: f64, delta: f64) -> f64 {
    2.0 * mu * (0.5 - 2.0 * delta - kappa * b * b * (0.5 + delta))
}

/// Smallest admissible `s₀` for the R-DSGD PL schedule: `max(2L/(δα), 2)` (strict).
pub fn rdsgd_pl_s0_min(l: f64, delta: f64, alpha: f64) -> f64 {
    (2.0 * l / (delta * alpha)).max(2.0)
}

/// Rate constant of the momentum PL schedule: `(3/8 − 21κB²)μ`.
pub fn momentum_pl_alpha(mu: f64, kappa: f64, b: f64) -> f64 {
    (0.375 - 21.0 * kappa * b * b) * mu
}

/// Smallest admissible `s₀` for the momentum PL schedule: `max(2, 72L/α)` (strict).
pub fn momentum_pl_s0_min(l: f64, alpha: f64) -> f64 {
    (72.0 * l / alpha).max(2.0)
}
