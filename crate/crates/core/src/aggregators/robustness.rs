//! Empirical lower bounds on the robustness coefficient κ of a rule.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, AggregatorSpec, OracleContext, OracleVariant, Rule};
use crate::error::{Error, Result};
use crate::population::subset_mean;
use crate::rng::{Purpose, RngStream, StreamId};
use crate::vector::DenseVector;

/// Honest subsets are enumerated when there are at most this many, sampled otherwise.
const MAX_SUBSETS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub updates: Vec<DenseVector>,
    pub honest_ids: Vec<usize>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEstimate {
    pub rule: String,
    pub n: usize,
    pub b: usize,
    /// Largest observed ratio over inputs with nonzero honest dispersion.
    pub kappa_hat: f64,
    pub samples: usize,
    pub worst_case_input: Option<WorstCase>,
    /// Inputs with identical honest vectors where the output still left the honest mean.
    pub violations: usize,
}

/// Ratio `‖A − x̄_H‖² / ((1/h) Σ ‖x_i − x̄_H‖²)`; `None` when the honest inputs coincide.
pub fn robustness_ratio(out: &DenseVector, updates: &[DenseVector], honest: &[usize]) -> Result<(Option<f64>, bool)> {
    let mean = subset_mean(updates, honest)?;
    let num = out.dist_sq(&mean)?;
    let den = honest.iter().map(|&i| updates[i].dist_sq(&mean)).sum::<Result<f64>>()? / honest.len() as f64;
    if den > 0.0 {
        Ok((Some(num / den), false))
    } else {
        Ok((None, num > 1e-20 * (1.0 + mean.norm_sq())))
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        if out.len() > MAX_SUBSETS {
            return out;
        }
        let mut i = k;
        while i > 0 && cur[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn gaussian(rng: &mut RngStream, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.into_iter().map(|x| x / norm).collect()
}

/// One random input: Gaussian clouds, planted outliers or axis spikes.
fn draw_input(index: usize, n: usize, b: usize, dim: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    match index % 3 {
        0 => {
            let center = gaussian(rng, dim, 10.0);
            let spread = 10f64.powf(rng.random_range(-2.0..2.0));
            let mut pts: Vec<Vec<f64>> = (0..n)
                .map(|_| gaussian(rng, dim, spread).iter().zip(&center).map(|(a, c)| a + c).collect())
                .collect();
            if b > 0 && rng.random_bool(0.5) {
                let offset = 10f64.powf(rng.random_range(0.0..3.0));
                let dir = unit(rng, dim);
                for i in sample_indices(rng, n, b) {
                    pts[i].iter_mut().zip(&dir).for_each(|(p, d)| *p += offset * d);
                }
            }
            pts
        }
        1 => {
            let mut pts: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, dim, 1.0)).collect();
            let magnitude = 10f64.powi(((index / 3) % 7) as i32);
            for i in sample_indices(rng, n, b) {
                pts[i] = unit(rng, dim).into_iter().map(|d| magnitude * d).collect();
            }
            pts
        }
        _ => {
            let mut pts: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, dim, 1.0)).collect();
            for i in sample_indices(rng, n, b) {
                let mut spike = vec![0.0; dim];
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                spike[rng.random_range(0..dim)] = sign * 10f64.powf(rng.random_range(0.0..6.0));
                pts[i] = spike;
            }
            pts
        }
    }
}

struct SampleResult {
    best: Option<WorstCase>,
    violations: usize,
}

fn run_sample(spec: &AggregatorSpec, index: usize, dim: usize, seed: u64, subsets: &[Vec<usize>], sampled: bool) -> Result<SampleResult> {
    let (n, b) = (spec.n, spec.b);
    let mut rng = RngStream::new(seed, StreamId::new(index as u32, 0, Purpose::Estimator));
    let updates = draw_input(index, n, b, dim, &mut rng)
        .into_iter()
        .map(DenseVector::new)
        .collect::<Result<Vec<_>>>()?;
    let drawn;
    let subsets: &[Vec<usize>] = if sampled {
        drawn = (0..MAX_SUBSETS)
            .map(|_| {
                let mut s = sample_indices(&mut rng, n, n - b).into_vec();
                s.sort_unstable();
                s
            })
            .collect::<Vec<_>>();
        &drawn
    } else {
        subsets
    };
    let ctx = OracleContext::default();
    let plain = if spec.is_oracle() { None } else { Some(aggregate(spec, &updates, None, &ctx)?) };
    let mut result = SampleResult { best: None, violations: 0 };
    for honest in subsets {
        let out = match &plain {
            Some(v) => v.clone(),
            None => aggregate(spec, &updates, Some(honest), &ctx)?,
        };
        match robustness_ratio(&out, &updates, honest)? {
            (Some(ratio), _) => {
                if result.best.as_ref().is_none_or(|w| ratio > w.ratio) {
                    result.best = Some(WorstCase { updates: updates.clone(), honest_ids: honest.clone(), ratio });
                }
            }
            (None, violated) => result.violations += violated as usize,
        }
    }
    Ok(result)
}

/// Draws `samples` random inputs of dimension `dim` and records the largest
/// ratio over honest subsets of size `n − b`. Deterministic in `seed`.
pub fn estimate_kappa(spec: &AggregatorSpec, samples: usize, dim: usize, seed: u64) -> Result<RobustnessEstimate> {
    spec.validate()?;
    if samples == 0 || dim == 0 {
        return Err(Error::config("estimate_kappa needs samples >= 1 and dim >= 1"));
    }
    if let Rule::OracleAdversarial { variant: OracleVariant::NoiseC2, .. } = spec.rule {
        return Err(Error::Unsupported("noise_c2 is only defined on the noise construction".into()));
    }
    let (n, b) = (spec.n, spec.b);
    let all = combinations(n, n - b);
    let sampled = all.len() > MAX_SUBSETS;
    let results: Vec<SampleResult> = (0..samples)
        .into_par_iter()
        .map(|i| run_sample(spec, i, dim, seed, &all, sampled))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<WorstCase> = None;
    let mut violations = 0;
    for r in results {
        violations += r.violations;
        if let Some(w) = r.best {
            if best.as_ref().is_none_or(|cur| w.ratio > cur.ratio) {
                best = Some(w);
            }
        }
    }
    Ok(RobustnessEstimate {
        rule: spec.rule.name().to_string(),
        n,
        b,
        kappa_hat: best.as_ref().map_or(0.0, |w| w.ratio),
        samples,
        worst_case_input: best,
        violations,
    })
}
