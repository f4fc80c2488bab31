//! Checks of the (G, B) dissimilarity condition
//! `(1/h) Σ_{i∈H} ‖∇f_i(x) − ∇f_H(x)‖² ≤ G² + B² ‖∇f_H(x)‖²`.
//!
//! For diagonal quadratics the left side minus `B²‖∇f_H‖²` is a separable
//! quadratic `Σ_k α_k x_k² + β_k x_k + γ_k`, so the condition holds for all x
//! iff every coordinate is bounded above and the sum of the suprema is at most G².

use serde::{Deserialize, Serialize};

use super::ProblemInstance;
use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Outcome of the exact certifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Certificate {
    /// Holds with slack everywhere.
    Pass,
    /// Holds, with equality attained somewhere.
    Tight,
    /// Violated; `witness` maximizes the violation (or exhibits it, if unbounded).
    Fail { witness: DenseVector, excess: f64 },
}

impl Certificate {
    /// True for `Pass` and `Tight`.
    pub fn holds(&self) -> bool {
        !matches!(self, Certificate::Fail { .. })
    }
}

/// Outcome of the grid check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SampleCheck {
    Pass,
    Fail { witness: DenseVector, excess: f64 },
}

impl SampleCheck {
    pub fn holds(&self) -> bool {
        matches!(self, SampleCheck::Pass)
    }
}

/// Per-coordinate coefficients `(α, β, γ)` of `LHS − B²‖∇f_H‖²` (G² not subtracted).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateQuadratic {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Magnitude of the terms that formed `alpha`, used for round-off tolerances.
    scale: f64,
}

impl CoordinateQuadratic {
    fn eval(&self, x: f64) -> f64 {
        (self.alpha * x + self.beta) * x + self.gamma
    }

    fn tol(&self) -> f64 {
        1e-12 * self.scale.max(1.0)
    }

    /// `Some((sup, argmax))` when the coordinate is bounded above.
    fn supremum(&self) -> Option<(f64, f64)> {
        let tol = self.tol();
        if self.alpha < -tol {
            let x = -self.beta / (2.0 * self.alpha);
            Some((self.gamma - self.beta * self.beta / (4.0 * self.alpha), x))
        } else if self.alpha.abs() <= tol && self.beta.abs() <= tol {
            Some((self.gamma, 0.0))
        } else {
            None
        }
    }
}

/// Coefficients of every coordinate for a quadratic instance.
pub fn coordinate_quadratics(inst: &ProblemInstance, b: f64) -> Result<Vec<CoordinateQuadratic>> {
    let locals = inst
        .locals()
        .ok_or_else(|| Error::Unsupported("exact certification needs quadratic locals; use the grid check".into()))?;
    let ids = inst.pop().honest_ids();
    let h = ids.len() as f64;
    let b2 = b * b;
    let mut out = Vec::with_capacity(inst.dim());
    for k in 0..inst.dim() {
        let abar = ids.iter().map(|&i| locals[i].a[k]).sum::<f64>() / h;
        let cbar = ids.iter().map(|&i| locals[i].c[k]).sum::<f64>() / h;
        let (mut vaa, mut vac, mut vcc, mut saa) = (0.0, 0.0, 0.0, 0.0);
        for &i in ids {
            let da = locals[i].a[k] - abar;
            let dc = locals[i].c[k] - cbar;
            vaa += da * da;
            vac += da * dc;
            vcc += dc * dc;
            saa += locals[i].a[k] * locals[i].a[k];
        }
        out.push(CoordinateQuadratic {
            alpha: vaa / h - b2 * abar * abar,
            beta: 2.0 * vac / h - 2.0 * b2 * abar * cbar,
            gamma: vcc / h - b2 * cbar * cbar,
            scale: saa / h + b2 * abar * abar,
        });
    }
    Ok(out)
}

/// Exact certifier for quadratic instances.
pub fn certify_dissimilarity(inst: &ProblemInstance, g: f64, b: f64) -> Result<Certificate> {
    let coords = coordinate_quadratics(inst, b)?;
    let g2 = g * g;
    let mut witness = Vec::with_capacity(coords.len());
    let mut total = 0.0;
    let mut unbounded = None;
    for (k, q) in coords.iter().enumerate() {
        match q.supremum() {
            Some((sup, x)) => {
                total += sup;
                witness.push(x);
            }
            None => {
                unbounded.get_or_insert(k);
                witness.push(0.0);
            }
        }
    }
    let value_at = |w: &[f64]| coords.iter().zip(w).map(|(q, x)| q.eval(*x)).sum::<f64>();
    if let Some(k) = unbounded {
        // Walk outwards along the unbounded coordinate until the violation shows.
        let q = coords[k];
        let dir = if q.alpha > q.tol() { 1.0 } else { q.beta.signum() };
        let mut r = 1.0;
        loop {
            witness[k] = dir * r;
            let excess = value_at(&witness) - g2;
            if excess > 0.0 || r > 1e150 {
                return Ok(Certificate::Fail { witness: DenseVector::from_computed(witness, "witness")?, excess });
            }
            r *= 2.0;
        }
    }
    let scale: f64 = coords.iter().map(|q| q.scale).sum::<f64>() + g2;
    let tol = 1e-10 * scale.max(1.0);
    if total > g2 + tol {
        let excess = value_at(&witness) - g2;
        Ok(Certificate::Fail { witness: DenseVector::from_computed(witness, "witness")?, excess })
    } else if total >= g2 - tol {
        Ok(Certificate::Tight)
    } else {
        Ok(Certificate::Pass)
    }
}

/// Smallest G certified for the given B, or `None` if no G works.
pub fn minimal_g(inst: &ProblemInstance, b: f64) -> Result<Option<f64>> {
    let coords = coordinate_quadratics(inst, b)?;
    let mut total = 0.0;
    for q in &coords {
        match q.supremum() {
            Some((sup, _)) => total += sup,
            None => return Ok(None),
        }
    }
    Ok(Some(total.max(0.0).sqrt()))
}

/// `LHS(x) − G² − B²‖∇f_H(x)‖²`; positive means the condition fails at x.
pub fn dissimilarity_excess(inst: &ProblemInstance, g: f64, b: f64, x: &DenseVector) -> Result<f64> {
    let (lhs, grad_sq) = dissimilarity_terms(inst, x)?;
    Ok(lhs - g * g - b * b * grad_sq)
}

/// `(LHS(x), ‖∇f_H(x)‖²)`.
pub fn dissimilarity_terms(inst: &ProblemInstance, x: &DenseVector) -> Result<(f64, f64)> {
    let gh = inst.global_gradient(x)?;
    let ids = inst.pop().honest_ids();
    let mut gi = vec![0.0; inst.dim()];
    let mut lhs = 0.0;
    for &i in ids {
        inst.exact_grad_into(i, x.as_slice(), false, &mut gi);
        lhs += crate::vector::dist_sq(&gi, gh.as_slice());
    }
    Ok((lhs / ids.len() as f64, gh.norm_sq()))
}

/// Pointwise check on a finite grid; works for any instance.
pub fn sample_check_dissimilarity(inst: &ProblemInstance, g: f64, b: f64, grid: &[DenseVector]) -> Result<SampleCheck> {
    if grid.is_empty() {
        return Err(Error::config("grid must be non-empty"));
    }
    let mut worst: Option<(f64, &DenseVector)> = None;
    for x in grid {
        let (lhs, grad_sq) = dissimilarity_terms(inst, x)?;
        let rhs = g * g + b * b * grad_sq;
        let excess = lhs - rhs;
        if excess > 1e-9 * (1.0 + rhs) && worst.is_none_or(|(e, _)| excess > e) {
            worst = Some((excess, x));
        }
    }
    Ok(match worst {
        None => SampleCheck::Pass,
        Some((excess, x)) => SampleCheck::Fail { witness: x.clone(), excess },
    })
}

/// Smallest G that passes the grid check for the given B.
pub fn minimal_g_on_grid(inst: &ProblemInstance, b: f64, grid: &[DenseVector]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in grid {
        let (lhs, grad_sq) = dissimilarity_terms(inst, x)?;
        worst = worst.max(lhs - b * b * grad_sq);
    }
    Ok(worst.sqrt())
}

/// `count` evenly spaced one-dimensional points on `[lo, hi]`.
pub fn linspace_grid(lo: f64, hi: f64, count: usize) -> Vec<DenseVector> {
    match count {
        0 => Vec::new(),
        1 => vec![DenseVector::filled(1, lo)],
        _ => (0..count)
            .map(|i| DenseVector::filled(1, lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}
