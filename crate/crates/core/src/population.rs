//! Worker populations: which of the `n` workers are honest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// `n` workers of which `b` are Byzantine. Honest ids are kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPopulation {
    n: usize,
    honest: Vec<usize>,
    byzantine: Vec<usize>,
}

impl WorkerPopulation {
    /// Population with an explicit honest set. Requires `b < n/2`.
    pub fn new(n: usize, honest_ids: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("population must contain at least one worker"));
        }
        let mut honest = honest_ids.to_vec();
        honest.sort_unstable();
        honest.dedup();
        if honest.len() != honest_ids.len() {
            return Err(Error::config("honest ids must be distinct"));
        }
        if let Some(&bad) = honest.iter().find(|&&i| i >= n) {
            return Err(Error::config(format!("honest id {bad} out of range for n = {n}")));
        }
        let b = n - honest.len();
        if 2 * b >= n {
            return Err(Error::config(format!(
                "Byzantine count b = {b} violates the robustness precondition b < n/2 (n = {n})"
            )));
        }
        let byzantine = (0..n).filter(|i| honest.binary_search(i).is_err()).collect();
        Ok(Self { n, honest, byzantine })
    }

    /// Workers `0..n-b` honest, the last `b` Byzantine.
    pub fn trailing_byzantine(n: usize, b: usize) -> Result<Self> {
        if b > n {
            return Err(Error::config(format!("b = {b} exceeds n = {n}")));
        }
        let honest: Vec<usize> = (0..n - b).collect();
        Self::new(n, &honest)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.byzantine.len()
    }

    pub fn h(&self) -> usize {
        self.honest.len()
    }

    pub fn honest_ids(&self) -> &[usize] {
        &self.honest
    }

    pub fn byzantine_ids(&self) -> &[usize] {
        &self.byzantine
    }

    pub fn is_honest(&self, i: usize) -> bool {
        self.honest.binary_search(&i).is_ok()
    }
}

/// `(1/h) Σ_{i∈H} updates[i]`.
pub fn honest_mean(updates: &[DenseVector], pop: &WorkerPopulation) -> Result<DenseVector> {
    if updates.len() != pop.n() {
        return Err(Error::config(format!(
            "expected {} updates, got {}",
            pop.n(),
            updates.len()
        )));
    }
    subset_mean(updates, pop.honest_ids())
}

/// Mean of `updates[i]` over `ids`.
pub(crate) fn subset_mean(updates: &[DenseVector], ids: &[usize]) -> Result<DenseVector> {
    let dim = updates
        .first()
        .map(DenseVector::dim)
        .ok_or_else(|| Error::config("empty update list"))?;
    if ids.is_empty() {
        return Err(Error::config("mean over an empty index set"));
    }
    let mut acc = vec![0.0; dim];
    for &i in ids {
        let u = updates
            .get(i)
            .ok_or_else(|| Error::config(format!("index {i} out of range")))?;
        if u.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: u.dim() });
        }
        for (a, x) in acc.iter_mut().zip(u.as_slice()) {
            *a += x;
        }
    }
    let inv = 1.0 / ids.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    DenseVector::from_computed(acc, "honest mean")
}
