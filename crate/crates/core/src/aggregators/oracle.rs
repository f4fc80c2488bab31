//! Honest-set-aware rules that inject the largest error a (b, κ)-robust
//! aggregator may legally produce. They realise the lower-bound constructions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::NoiseParams;
use crate::vector::{dist_sq, norm_sq, DenseVector};

/// How `variance_sign` picks the sign of its deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPolicy {
    /// Deviate against the current displacement `x - x*`, so the step is pushed outwards.
    #[default]
    Displacement,
    /// Pick the sign whose resulting iterate `x - γ A` lies farther from `x*`.
    /// Falls back to `Displacement` when the step size is unknown.
    NextIterate,
}

/// Which honest-set-aware rule to apply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OracleVariant {
    VarianceSign { policy: SignPolicy },
    /// Two-worker heterogeneity construction.
    HeteroC1,
    /// Two-worker Bernoulli noise construction.
    NoiseC2,
}

/// Side information the oracle rules may read.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleContext<'a> {
    /// Current model.
    pub x: Option<&'a [f64]>,
    /// Minimizer of `f_H`.
    pub x_star: Option<&'a [f64]>,
    /// Step size about to be applied to the aggregate.
    pub step: Option<f64>,
    /// Bernoulli outcomes per worker (0 means `+σ`).
    pub xi: Option<&'a [Vec<u8>]>,
    /// Parameters of the noise construction.
    pub noise: Option<NoiseParams>,
}

fn honest_stats(updates: &[DenseVector], honest: &[usize], mean: &mut [f64]) -> Result<f64> {
    if honest.is_empty() {
        return Err(Error::config("oracle rule needs at least one honest worker"));
    }
    mean.iter_mut().for_each(|m| *m = 0.0);
    for &i in honest {
        let u = updates.get(i).ok_or_else(|| Error::config(format!("honest id {i} out of range")))?;
        for (m, v) in mean.iter_mut().zip(u.as_slice()) {
            *m += v;
        }
    }
    let h = honest.len() as f64;
    mean.iter_mut().for_each(|m| *m /= h);
    Ok(honest.iter().map(|&i| dist_sq(updates[i].as_slice(), mean)).sum::<f64>() / h)
}

/// `x̄_H ± sqrt(κ V²) u` with `u` the unit displacement (or the normalized
/// all-ones direction when the displacement is zero or unknown).
pub(crate) fn variance_sign_into(
    updates: &[DenseVector],
    honest: &[usize],
    kappa: f64,
    policy: SignPolicy,
    ctx: &OracleContext,
    out: &mut [f64],
) -> Result<()> {
    let v2 = honest_stats(updates, honest, out)?;
    let r = (kappa * v2).sqrt();
    if r == 0.0 {
        return Ok(());
    }
    let dim = out.len();
    let mut dir = vec![1.0 / (dim as f64).sqrt(); dim];
    // Sign multiplying `dir` in the displacement policy.
    let mut sign = 1.0;
    if let (Some(x), Some(xs)) = (ctx.x, ctx.x_star) {
        let disp: Vec<f64> = x.iter().zip(xs).map(|(a, b)| a - b).collect();
        let norm = norm_sq(&disp).sqrt();
        if norm > 0.0 {
            dir.iter_mut().zip(&disp).for_each(|(d, v)| *d = v / norm);
            sign = -1.0;
        }
        if let (SignPolicy::NextIterate, Some(step)) = (policy, ctx.step) {
            let dist_after = |s: f64| -> f64 {
                (0..dim)
                    .map(|k| {
                        let a = out[k] + s * r * dir[k];
                        let e = x[k] - step * a - xs[k];
                        e * e
                    })
                    .sum()
            };
            let (keep, flip) = (dist_after(sign), dist_after(-sign));
            if flip > keep {
                sign = -sign;
            }
        }
    }
    out.iter_mut().zip(&dir).for_each(|(o, d)| *o += sign * r * d);
    Ok(())
}

fn require_two(honest: &[usize], what: &str) -> Result<()> {
    if honest.len() != 2 {
        return Err(Error::config(format!("{what} is defined for exactly two honest workers, got {}", honest.len())));
    }
    Ok(())
}

/// `x̄_H − sqrt(κ) (u_first − x̄_H)`; on the heterogeneity construction
/// `u_first − x̄_H = δx + ε`.
pub(crate) fn hetero_c1_into(updates: &[DenseVector], honest: &[usize], kappa: f64, out: &mut [f64]) -> Result<()> {
    require_two(honest, "hetero_c1")?;
    honest_stats(updates, honest, out)?;
    let r = kappa.sqrt();
    for (o, u) in out.iter_mut().zip(updates[honest[0]].as_slice()) {
        *o -= r * (u - *o);
    }
    Ok(())
}

/// Drift term of the noise construction for one coordinate.
pub fn noise_drift(params: &NoiseParams, sigma_coord: f64, x: f64, xi1: u8, xi2: u8) -> f64 {
    let bmx = params.b * params.mu * x;
    match (xi1, xi2) {
        (1, 0) => -bmx + sigma_coord,
        (0, 1) => bmx + sigma_coord,
        _ => bmx,
    }
}

/// `ḡ − sqrt(κ) W(x; ξ₁, ξ₂)` per coordinate.
pub(crate) fn noise_c2_into(
    updates: &[DenseVector],
    honest: &[usize],
    kappa: f64,
    ctx: &OracleContext,
    out: &mut [f64],
) -> Result<()> {
    require_two(honest, "noise_c2")?;
    let (Some(x), Some(xi), Some(params)) = (ctx.x, ctx.xi, ctx.noise) else {
        return Err(Error::config("noise_c2 needs the current model, Bernoulli outcomes and noise-construction parameters"));
    };
    honest_stats(updates, honest, out)?;
    let (x1, x2) = (&xi[honest[0]], &xi[honest[1]]);
    let sigma_coord = params.sigma_per_coord(out.len());
    let r = kappa.sqrt();
    for k in 0..out.len() {
        out[k] -= r * noise_drift(&params, sigma_coord, x[k], x1[k], x2[k]);
    }
    Ok(())
}
