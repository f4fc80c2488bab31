//! Per-iteration metrics and run summaries.

use serde::{Deserialize, Serialize};

use super::lyapunov::LyapunovTrace;
use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Metrics of iterate `x^t`. Row `t` also carries the `(γ_t, β_t)` that produced it
/// (zero for the initial row) and `V^t` when tracked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: usize,
    pub grad_norm_sq: f64,
    pub f_gap: f64,
    pub dist_to_ref: Option<f64>,
    pub lyapunov: Option<f64>,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub final_grad_norm_sq: f64,
    pub final_f_gap: f64,
    pub final_dist_to_ref: Option<f64>,
    /// `(1/T) Σ_{t=0}^{T-1} ‖∇f_H(x^t)‖²`.
    pub time_avg_grad_norm_sq: f64,
    /// Mean `‖∇f_H(x^t)‖²` over the trailing window.
    pub floor_estimate: f64,
    pub floor_window: f64,
}

/// Per-round worker state captured for debugging and tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerSnapshot {
    pub t: usize,
    pub gradients: Vec<DenseVector>,
    pub momenta: Vec<DenseVector>,
    pub sent: Vec<DenseVector>,
}

/// Output of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// All rows `0..=T` in full mode, only the floor window otherwise.
    pub rows: Vec<Row>,
    /// Iterates `x^0..=x^T` in full mode, empty otherwise.
    pub trajectory: Vec<DenseVector>,
    /// `x^{T-1}`.
    pub penultimate: DenseVector,
    /// `x^T`.
    pub final_x: DenseVector,
    pub summary: RunSummary,
    pub lyapunov: Option<LyapunovTrace>,
    pub workers: Vec<WorkerSnapshot>,
}

/// Number of trailing iterations averaged for a window fraction.
pub fn window_len(iterations: usize, fraction: f64) -> usize {
    ((fraction * iterations as f64).ceil() as usize).clamp(1, iterations.max(1))
}

/// Mean `grad_norm_sq` over rows `t ∈ (T − w, T]` with `w = ceil(fraction · T)`.
pub fn measure_floor(record: &RunRecord, window_fraction: f64) -> Result<f64> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::config(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    let total = record.summary.iterations;
    let w = window_len(total, window_fraction);
    let start = total + 1 - w;
    let rows: Vec<&Row> = record.rows.iter().filter(|r| r.t >= start).collect();
    if rows.len() != w {
        return Err(Error::config(format!(
            "record holds {} of the {w} rows needed; rerun in full mode",
            rows.len()
        )));
    }
    Ok(rows.iter().map(|r| r.grad_norm_sq).sum::<f64>() / w as f64)
}
