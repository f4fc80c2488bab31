//! Stochastic-gradient noise models.
//!
//! `sigma` is always the total standard deviation of the noise vector. In
//! dimension `d` each coordinate receives `sigma / sqrt(d)`, so the expected
//! squared norm of the noise is `sigma^2` whatever the dimension.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Exact gradients.
    None,
    /// Additive isotropic Gaussian noise.
    Gaussian { sigma: f64 },
    /// Additive `±sigma/sqrt(d)` per coordinate with probability one half each.
    BernoulliPm { sigma: f64 },
    /// Average of `m` per-sample gradients drawn with replacement (classification only).
    Minibatch { m: usize },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } | NoiseModel::BernoulliPm { sigma } => {
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::config(format!("noise sigma must be finite and >= 0, got {sigma}")));
                }
            }
            NoiseModel::Minibatch { m: 0 } => {
                return Err(Error::config("minibatch size m must be at least 1"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Total standard deviation for additive models, zero for exact gradients.
    /// Minibatch noise has no closed-form sigma and returns `None`.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            NoiseModel::None => Some(0.0),
            NoiseModel::Gaussian { sigma } | NoiseModel::BernoulliPm { sigma } => Some(sigma),
            NoiseModel::Minibatch { .. } => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma() == Some(0.0)
    }

    /// Adds additive noise to `grad` in place. For the Bernoulli model the
    /// outcome per coordinate is written to `xi` (0 means `+`, 1 means `-`).
    pub(crate) fn perturb<R: Rng + ?Sized>(&self, grad: &mut [f64], xi: &mut [u8], rng: &mut R) {
        let d = grad.len() as f64;
        match *self {
            NoiseModel::None | NoiseModel::Minibatch { .. } => {}
            NoiseModel::Gaussian { sigma } => {
                let s = sigma / d.sqrt();
                for g in grad.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *g += s * z;
                }
            }
            NoiseModel::BernoulliPm { sigma } => {
                let s = sigma / d.sqrt();
                let mut bits = 0u64;
                let mut left = 0u32;
                for (g, x) in grad.iter_mut().zip(xi.iter_mut()) {
                    if left == 0 {
                        bits = rng.next_u64();
                        left = 64;
                    }
                    let b = (bits & 1) as u8;
                    bits >>= 1;
                    left -= 1;
                    *x = b;
                    *g += if b == 0 { s } else { -s };
                }
            }
        }
    }
}
