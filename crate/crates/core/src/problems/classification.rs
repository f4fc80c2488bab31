//! Synthetic Gaussian-mixture classification with softmax regression.
//!
//! Each class is one mixture component. Samples of every class are spread over
//! workers with Dirichlet(α) proportions, so small α gives highly skewed local
//! label distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream, StreamId};

/// Knobs of the synthetic classification task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSpec {
    pub features: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    /// Norm of each class mean.
    pub separation: f64,
    pub dirichlet_alpha: f64,
    /// Ridge penalty; it is also the strong-convexity constant of every local loss.
    pub l2: f64,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        Self { features: 5, classes: 10, samples_per_class: 40, separation: 3.0, dirichlet_alpha: 1.0, l2: 0.01 }
    }
}

impl ClassificationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.classes < 2 || self.samples_per_class == 0 {
            return Err(Error::config("classification needs features >= 1, classes >= 2, samples_per_class >= 1"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::config("dirichlet_alpha must be positive"));
        }
        if !(self.l2 >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("l2 must be >= 0 and separation finite"));
        }
        Ok(())
    }

    /// Number of model parameters: one weight row plus bias per class.
    pub fn model_dim(&self) -> usize {
        self.classes * (self.features + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Replaces label `y` with `(C-1) - y`.
pub fn label_flip(sample: &Sample, classes: usize) -> Result<Sample> {
    if sample.label >= classes {
        return Err(Error::Data(format!("label {} outside 0..{classes}", sample.label)));
    }
    Ok(Sample { features: sample.features.clone(), label: classes - 1 - sample.label })
}

/// Partitioned dataset plus the loss it defines.
#[derive(Clone, Debug)]
pub struct ClassificationTask {
    spec: ClassificationSpec,
    shards: Vec<Vec<Sample>>,
    flipped: Vec<Vec<Sample>>,
    max_sq_norm: f64,
}

const PARTITION_ATTEMPTS: usize = 200;

impl ClassificationTask {
    /// Draws the mixture and partitions it over `workers` workers.
    pub fn generate(spec: &ClassificationSpec, workers: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if workers == 0 {
            return Err(Error::config("classification needs at least one worker"));
        }
        let mut data_rng = RngStream::new(seed, StreamId::new(0, 0, Purpose::Dataset));
        let mut means = Vec::with_capacity(spec.classes);
        for _ in 0..spec.classes {
            let mut m: Vec<f64> = (0..spec.features).map(|_| data_rng.sample(StandardNormal)).collect();
            let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            m.iter_mut().for_each(|v| *v *= spec.separation / norm);
            means.push(m);
        }
        let mut by_class: Vec<Vec<Sample>> = Vec::with_capacity(spec.classes);
        for (label, mean) in means.iter().enumerate() {
            let samples = (0..spec.samples_per_class)
                .map(|_| Sample {
                    features: mean.iter().map(|m| m + data_rng.sample::<f64, _>(StandardNormal)).collect(),
                    label,
                })
                .collect();
            by_class.push(samples);
        }

        let mut part_rng = RngStream::new(seed, StreamId::new(0, 0, Purpose::Partition));
        let mut assignment = None;
        for _ in 0..PARTITION_ATTEMPTS {
            let a = dirichlet_assignment(&by_class, workers, spec.dirichlet_alpha, &mut part_rng)?;
            if a.iter().all(|s| !s.is_empty()) {
                assignment = Some(a);
                break;
            }
        }
        let assignment = match assignment {
            Some(a) => a,
            None => {
                // Highly skewed draws at tiny α: keep the last draw and hand each empty
                // worker one sample from the currently largest shard.
                let mut a = dirichlet_assignment(&by_class, workers, spec.dirichlet_alpha, &mut part_rng)?;
                let total: usize = a.iter().map(Vec::len).sum();
                if total < workers {
                    return Err(Error::Construction(format!(
                        "{total} samples cannot cover {workers} workers"
                    )));
                }
                for w in 0..workers {
                    if a[w].is_empty() {
                        let donor = (0..workers).max_by_key(|&j| a[j].len()).expect("workers >= 1");
                        let moved = a[donor].pop().expect("donor shard is non-empty");
                        a[w].push(moved);
                    }
                }
                a
            }
        };

        let shards: Vec<Vec<Sample>> = assignment
            .into_iter()
            .map(|ids| ids.into_iter().map(|(c, i)| by_class[c][i].clone()).collect())
            .collect();
        let flipped = shards
            .iter()
            .map(|s| s.iter().map(|x| label_flip(x, spec.classes)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let max_sq_norm = shards
            .iter()
            .flatten()
            .map(|s| 1.0 + s.features.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self { spec: spec.clone(), shards, flipped, max_sq_norm })
    }

    pub fn spec(&self) -> &ClassificationSpec {
        &self.spec
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, worker: usize) -> &[Sample] {
        &self.shards[worker]
    }

    /// Upper bound on the smoothness constant of every local loss.
    pub fn smoothness(&self) -> f64 {
        0.5 * self.max_sq_norm + self.spec.l2
    }

    fn data(&self, worker: usize, poisoned: bool) -> &[Sample] {
        if poisoned {
            &self.flipped[worker]
        } else {
            &self.shards[worker]
        }
    }

    /// Full-shard regularized cross-entropy.
    pub fn value(&self, worker: usize, w: &[f64]) -> f64 {
        let data = self.data(worker, false);
        let mut logits = vec![0.0; self.spec.classes];
        let total: f64 = data.iter().map(|s| self.sample_loss(w, s, &mut logits)).sum();
        total / data.len() as f64 + 0.5 * self.spec.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Full-shard gradient.
    pub fn grad_into(&self, worker: usize, w: &[f64], poisoned: bool, out: &mut [f64]) {
        let data = self.data(worker, poisoned);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut probs = vec![0.0; self.spec.classes];
        for s in data {
            self.accumulate_grad(w, s, &mut probs, out);
        }
        self.finish(w, data.len(), out);
    }

    /// Gradient of `m` samples drawn with replacement from the shard.
    pub(crate) fn minibatch_grad_into<R: Rng + ?Sized>(
        &self,
        worker: usize,
        w: &[f64],
        poisoned: bool,
        m: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let data = self.data(worker, poisoned);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut probs = vec![0.0; self.spec.classes];
        for _ in 0..m {
            let s = &data[rng.random_range(0..data.len())];
            self.accumulate_grad(w, s, &mut probs, out);
        }
        self.finish(w, m, out);
    }

    fn logits(&self, w: &[f64], s: &Sample, out: &mut [f64]) {
        let p = self.spec.features;
        for (c, o) in out.iter_mut().enumerate() {
            let row = &w[c * (p + 1)..(c + 1) * (p + 1)];
            *o = row[p] + row[..p].iter().zip(&s.features).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn sample_loss(&self, w: &[f64], s: &Sample, logits: &mut [f64]) -> f64 {
        self.logits(w, s, logits);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[s.label]
    }

    fn accumulate_grad(&self, w: &[f64], s: &Sample, probs: &mut [f64], out: &mut [f64]) {
        self.logits(w, s, probs);
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for z in probs.iter_mut() {
            *z = (*z - max).exp();
            sum += *z;
        }
        let p = self.spec.features;
        for (c, pc) in probs.iter().enumerate() {
            let coef = pc / sum - if c == s.label { 1.0 } else { 0.0 };
            let row = &mut out[c * (p + 1)..(c + 1) * (p + 1)];
            for (o, x) in row[..p].iter_mut().zip(&s.features) {
                *o += coef * x;
            }
            row[p] += coef;
        }
    }

    fn finish(&self, w: &[f64], count: usize, out: &mut [f64]) {
        let inv = 1.0 / count as f64;
        for (o, wv) in out.iter_mut().zip(w) {
            *o = *o * inv + self.spec.l2 * wv;
        }
    }
}

/// One Dirichlet draw per class, then each sample goes to a worker drawn from
/// that class's proportions. Returns `(class, index)` pairs per worker.
fn dirichlet_assignment(
    by_class: &[Vec<Sample>],
    workers: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config(format!("dirichlet_alpha: {e}")))?;
    let mut out = vec![Vec::new(); workers];
    for (c, samples) in by_class.iter().enumerate() {
        let mut weights: Vec<f64> = (0..workers).map(|_| gamma.sample(rng)).collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Construction(format!("partition weights: {e}")))?;
        for i in 0..samples.len() {
            out[pick.sample(rng)].push((c, i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_worker_has_data_and_labels_in_range() {
        for &alpha in &[0.05, 0.5, 10.0] {
            let spec = ClassificationSpec { dirichlet_alpha: alpha, ..Default::default() };
            let task = ClassificationTask::generate(&spec, 12, 5).unwrap();
            for w in 0..12 {
                assert!(!task.shard(w).is_empty(), "alpha {alpha}: worker {w} empty");
                assert!(task.shard(w).iter().all(|s| s.label < spec.classes));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = ClassificationSpec { features: 3, classes: 4, samples_per_class: 6, ..Default::default() };
        let task = ClassificationTask::generate(&spec, 3, 9).unwrap();
        let dim = spec.model_dim();
        let w: Vec<f64> = (0..dim).map(|i| 0.1 * ((i * 7 % 5) as f64 - 2.0)).collect();
        let mut g = vec![0.0; dim];
        task.grad_into(1, &w, false, &mut g);
        let h = 1e-6;
        for k in 0..dim {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (task.value(1, &wp) - task.value(1, &wm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "coord {k}: fd {fd} vs analytic {}", g[k]);
        }
    }

    #[test]
    fn flip_is_an_involution() {
        for y in 0..10 {
            let s = Sample { features: vec![1.0], label: y };
            let once = label_flip(&s, 10).unwrap();
            assert_eq!(once.label, 9 - y);
            assert_eq!(label_flip(&once, 10).unwrap(), s);
        }
        assert!(matches!(label_flip(&Sample { features: vec![], label: 10 }, 10), Err(Error::Data(_))));
    }
}
