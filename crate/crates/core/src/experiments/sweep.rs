//! Grid sweeps with best-of selection.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{config_from_kv, stepsize_of_kind, KeyValues};
use crate::aggregators::Rule;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::rng::mix_seed;
use crate::trainer::{Momentum, RecordMode, Trainer};

/// Quantity minimized by the best-of selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    FinalFGap,
    FloorEstimate,
}

/// Base configuration plus grids. An empty grid keeps the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub gamma0: Vec<f64>,
    /// Constant momentum values; zero means no momentum.
    pub beta: Vec<f64>,
    pub iterations: Vec<usize>,
    pub b_squared: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Step-size families, by name.
    pub stepsizes: Vec<String>,
    pub metric: SelectionMetric,
}

/// Coordinates of one grid cell. `None` means the base value was kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kappa: Option<f64>,
    pub b_squared: Option<f64>,
    pub beta: Option<f64>,
    pub stepsize: Option<String>,
    pub gamma0: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    /// `None` when the cell failed; see `error`.
    pub metric: Option<f64>,
    pub error: Option<String>,
}

/// Best completed cell of one (κ, B², β) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub kappa: Option<f64>,
    pub b_squared: Option<f64>,
    pub beta: Option<f64>,
    pub metric: f64,
    pub cell_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub best: Vec<BestRow>,
}

fn axis<T: Clone>(grid: &[T]) -> Vec<Option<T>> {
    if grid.is_empty() {
        vec![None]
    } else {
        grid.iter().cloned().map(Some).collect()
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate_basic()?;
        if self.iterations.contains(&0) {
            return Err(Error::config("sweep.iterations entries must be at least 1"));
        }
        if !self.stepsizes.is_empty() && self.gamma0.is_empty() {
            return Err(Error::config("sweep.stepsize needs a sweep.gamma0 grid"));
        }
        // Structural mismatches (e.g. a κ grid without an oracle rule) are errors up front, not failed cells.
        for cell in self.cells() {
            self.cell_config(&cell)?;
        }
        Ok(())
    }

    /// All cells in canonical order (κ, B², β, step family, γ₀, T).
    pub fn cells(&self) -> Vec<Cell> {
        let iters = if self.iterations.is_empty() { vec![self.base.iterations] } else { self.iterations.clone() };
        let mut out = Vec::new();
        for kappa in axis(&self.kappa) {
            for b2 in axis(&self.b_squared) {
                for beta in axis(&self.beta) {
                    for step in axis(&self.stepsizes) {
                        for g in axis(&self.gamma0) {
                            for &t in &iters {
                                out.push(Cell {
                                    index: out.len(),
                                    kappa,
                                    b_squared: b2,
                                    beta,
                                    stepsize: step.clone(),
                                    gamma0: g,
                                    iterations: t,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// The run configuration of one cell, seeded from the base seed and the cell index.
    pub fn cell_config(&self, cell: &Cell) -> Result<RunConfig> {
        let mut c = self.base.clone();
        c.iterations = cell.iterations;
        c.seed = mix_seed(self.base.seed, cell.index as u64);
        if let Some(k) = cell.kappa {
            match &mut c.rule {
                Rule::OracleAdversarial { kappa, .. } => *kappa = k,
                _ => return Err(Error::config("sweep.kappa needs an oracle_adversarial rule")),
            }
        }
        if let Some(b2) = cell.b_squared {
            if b2 < 0.0 {
                return Err(Error::config("sweep.b_squared entries must be >= 0"));
            }
            match &mut c.problem.spec {
                ProblemSpec::HeteroLowerBound { b, .. }
                | ProblemSpec::NoiseLowerBound { b, .. }
                | ProblemSpec::SyntheticFamily { b, .. } => *b = b2.sqrt(),
                _ => return Err(Error::config("sweep.b_squared needs a problem with a B parameter")),
            }
        }
        if let Some(beta) = cell.beta {
            c.schedule.momentum = if beta == 0.0 { Momentum::Zero } else { Momentum::Constant { beta } };
        }
        if let Some(g) = cell.gamma0 {
            let kind = cell.stepsize.clone().unwrap_or_else(|| c.schedule.stepsize.name().to_string());
            c.schedule.stepsize = stepsize_of_kind(&kind, g, cell.iterations)?;
        }
        Ok(c)
    }

    fn run_cell(&self, cell: &Cell) -> Result<f64> {
        let config = self.cell_config(cell)?;
        let trainer = Trainer::new(&config)?;
        let metric = |s: &crate::trainer::RunSummary| match self.metric {
            SelectionMetric::FinalFGap => s.final_f_gap,
            SelectionMetric::FloorEstimate => s.floor_estimate,
        };
        let values: Vec<f64> = if config.replicates == 1 {
            vec![metric(&trainer.run_replicate(0, RecordMode::Summary)?.summary)]
        } else {
            trainer.monte_carlo()?.summaries.iter().map(metric).collect()
        };
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("sweep metric".into()));
        }
        Ok(mean)
    }
}

/// Runs every cell (in parallel) and selects the best cell per (κ, B², β).
/// Failing cells are recorded and skipped.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let cells: Vec<CellResult> = cells
        .into_par_iter()
        .map(|cell| match spec.run_cell(&cell) {
            Ok(m) => CellResult { cell, metric: Some(m), error: None },
            Err(e) => CellResult { cell, metric: None, error: Some(e.to_string()) },
        })
        .collect();
    let key = |c: &Cell| (c.kappa.map(f64::to_bits), c.b_squared.map(f64::to_bits), c.beta.map(f64::to_bits));
    let mut groups: BTreeMap<usize, BestRow> = BTreeMap::new();
    let mut first_of: BTreeMap<_, usize> = BTreeMap::new();
    for r in &cells {
        let Some(m) = r.metric else { continue };
        let slot = *first_of.entry(key(&r.cell)).or_insert(r.cell.index);
        let better = groups.get(&slot).is_none_or(|b| m < b.metric);
        if better {
            groups.insert(
                slot,
                BestRow { kappa: r.cell.kappa, b_squared: r.cell.b_squared, beta: r.cell.beta, metric: m, cell_index: r.cell.index },
            );
        }
    }
    Ok(SweepResult { cells, best: groups.into_values().collect() })
}

fn parse_metric(v: &str) -> Result<SelectionMetric> {
    match v {
        "final_f_gap" => Ok(SelectionMetric::FinalFGap),
        "floor_estimate" => Ok(SelectionMetric::FloorEstimate),
        other => Err(Error::config(format!(
            "field `sweep.metric`: unknown value `{other}` (expected final_f_gap or floor_estimate)"
        ))),
    }
}

/// Parses a sweep file: a run configuration plus `sweep.*` grid keys.
pub fn parse_sweep_str(text: &str) -> Result<SweepSpec> {
    let kv = KeyValues::parse(text)?;
    let base = config_from_kv(&kv)?.config;
    let spec = SweepSpec {
        base,
        gamma0: kv.list_f64("sweep.gamma0")?.unwrap_or_default(),
        beta: kv.list_f64("sweep.beta")?.unwrap_or_default(),
        iterations: kv.list_usize("sweep.iterations")?.unwrap_or_default(),
        b_squared: kv.list_f64("sweep.b_squared")?.unwrap_or_default(),
        kappa: kv.list_f64("sweep.kappa")?.unwrap_or_default(),
        stepsizes: kv.list_str("sweep.stepsize").unwrap_or_default(),
        metric: parse_metric(kv.str_or("sweep.metric", "floor_estimate"))?,
    };
    kv.reject_unknown()?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_sweep(path: &Path) -> Result<SweepSpec> {
    parse_sweep_str(&std::fs::read_to_string(path)?)
}
