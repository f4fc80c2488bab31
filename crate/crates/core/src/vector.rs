//! Dense real vectors.
//!
//! `DenseVector` is the carrier for models, gradients and momenta. Every public
//! operation rejects dimension mismatches and refuses to hand back NaN or
//! infinite entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension vector of finite `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DenseVector {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        DenseVector::new(values)
    }
}

impl From<DenseVector> for Vec<f64> {
    fn from(v: DenseVector) -> Self {
        v.values
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl DenseVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("vector dimension must be at least 1"));
        }
        check_finite(&values, "vector construction")?;
        Ok(Self { values })
    }

    /// The zero vector of dimension `dim` (panics if `dim == 0`).
    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    /// Vector with every entry equal to `value` (panics if `dim == 0` or `value` is not finite).
    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "vector dimension must be at least 1");
        assert!(value.is_finite(), "fill value must be finite");
        Self { values: vec![value; dim] }
    }

    /// One-dimensional vector.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![value])
    }

    /// Wraps values produced by internal arithmetic, checking finiteness.
    pub(crate) fn from_computed(values: Vec<f64>, what: &str) -> Result<Self> {
        check_finite(&values, what)?;
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// First coordinate; convenient for the one-dimensional constructions.
    pub fn first(&self) -> f64 {
        self.values[0]
    }

    fn same_dim(&self, other: &DenseVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: other.dim() });
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseVector) -> Result<DenseVector> {
        self.same_dim(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self::from_computed(v, "vector addition")
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        self.same_dim(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::from_computed(v, "vector subtraction")
    }

    pub fn scale(&self, s: f64) -> Result<DenseVector> {
        let v = self.values.iter().map(|a| a * s).collect();
        Self::from_computed(v, "vector scaling")
    }

    pub fn neg(&self) -> DenseVector {
        Self { values: self.values.iter().map(|a| -a).collect() }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &DenseVector) -> Result<DenseVector> {
        self.same_dim(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Self::from_computed(v, "axpy")
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        self.same_dim(other)?;
        Ok(dot(&self.values, &other.values))
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Euclidean distance.
    pub fn dist_sq(&self, other: &DenseVector) -> Result<f64> {
        self.same_dim(other)?;
        Ok(dist_sq(&self.values, &other.values))
    }

    /// Arithmetic mean of a non-empty list of equal-dimension vectors.
    pub fn mean(vectors: &[DenseVector]) -> Result<DenseVector> {
        let first = vectors.first().ok_or_else(|| Error::config("mean of an empty vector list"))?;
        let mut acc = vec![0.0; first.dim()];
        for v in vectors {
            first.same_dim(v)?;
            for (a, x) in acc.iter_mut().zip(&v.values) {
                *a += x;
            }
        }
        let inv = 1.0 / vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Self::from_computed(acc, "vector mean")
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checks that every vector in `vectors` has dimension `dim`.
pub(crate) fn check_dims(vectors: &[DenseVector], dim: usize) -> Result<()> {
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: v.dim() });
        }
    }
    Ok(())
}
