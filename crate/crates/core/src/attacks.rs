//! Byzantine worker behaviours.

use serde::{Deserialize, Serialize};

use crate::aggregators::{aggregate, AggregatorSpec, OracleContext};
use crate::error::{Error, Result};
use crate::population::{subset_mean, WorkerPopulation};
use crate::vector::DenseVector;

pub use crate::problems::label_flip;

/// Candidate multipliers tried by ALIE, in tie-breaking order.
pub const DEFAULT_ALIE_CANDIDATES: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// Byzantine workers behave exactly like honest ones.
    None,
    /// Send the negated momentum computed from the worker's own data.
    SignFlip,
    /// Train honestly on label-flipped data.
    LabelFlip,
    /// "A little is enough": every Byzantine worker sends `μ + α σ`.
    Alie { candidates: Vec<f64> },
}

impl AttackKind {
    pub fn alie_default() -> Self {
        AttackKind::Alie { candidates: DEFAULT_ALIE_CANDIDATES.to_vec() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::SignFlip => "sign_flip",
            AttackKind::LabelFlip => "label_flip",
            AttackKind::Alie { .. } => "alie",
        }
    }

    /// Whether the attack reads honest updates.
    pub fn is_omniscient(&self) -> bool {
        matches!(self, AttackKind::Alie { .. })
    }
}

/// An attack bound to the Byzantine slots of a population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub byzantine_ids: Vec<usize>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, pop: &WorkerPopulation) -> Result<Self> {
        if let AttackKind::Alie { candidates } = &kind {
            if candidates.is_empty() || !candidates.iter().all(|a| a.is_finite()) {
                return Err(Error::config("alie needs a non-empty list of finite candidates"));
            }
        }
        Ok(Self { kind, byzantine_ids: pop.byzantine_ids().to_vec() })
    }
}

/// Negation of an honestly computed update.
pub fn sign_flip(g: &DenseVector) -> DenseVector {
    g.neg()
}

/// What an omniscient adversary sees in one round.
#[derive(Clone, Copy, Debug)]
pub struct AdversaryView<'a> {
    /// All `n` slots; only honest entries are read.
    pub updates: &'a [DenseVector],
    pub honest_ids: &'a [usize],
    pub byzantine_ids: &'a [usize],
    pub aggregator: &'a AggregatorSpec,
    /// Context handed to oracle rules when the server runs one.
    pub oracle_ctx: OracleContext<'a>,
}

/// Result of the greedy ALIE search.
#[derive(Clone, Debug, PartialEq)]
pub struct AlieChoice {
    pub alpha: f64,
    pub update: DenseVector,
    /// `‖A(…) − μ‖` achieved by the chosen α.
    pub displacement: f64,
}

/// Greedy ALIE: tries each candidate against the actual aggregator and keeps
/// the first one with the largest displacement from the honest mean.
/// σ is the square root of the total (not averaged) squared deviation of the honest updates.
pub fn alie(view: &AdversaryView, candidates: &[f64]) -> Result<AlieChoice> {
    if candidates.is_empty() {
        return Err(Error::config("alie needs at least one candidate"));
    }
    let mu = subset_mean(view.updates, view.honest_ids)?;
    let sigma = view
        .honest_ids
        .iter()
        .map(|&i| view.updates[i].dist_sq(&mu))
        .sum::<Result<f64>>()?
        .sqrt();
    let honest = view.aggregator.is_oracle().then_some(view.honest_ids);
    let mut slots = view.updates.to_vec();
    let mut best: Option<AlieChoice> = None;
    for &alpha in candidates {
        let g = DenseVector::from_computed(mu.as_slice().iter().map(|m| m + alpha * sigma).collect(), "alie update")?;
        for &j in view.byzantine_ids {
            slots[j] = g.clone();
        }
        let out = aggregate(view.aggregator, &slots, honest, &view.oracle_ctx)?;
        let displacement = out.dist_sq(&mu)?.sqrt();
        if best.as_ref().is_none_or(|b| displacement > b.displacement) {
            best = Some(AlieChoice { alpha, update: g, displacement });
        }
    }
    Ok(best.expect("candidates is non-empty"))
}
