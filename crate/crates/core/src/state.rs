//! The sample vector shared by every stage of the diffusion chain.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^D`: a clean sample, a noisy state, a noise draw or a prediction.
///
/// Every constructor rejects non-finite entries, so a `StateVector` that exists
/// is always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("state vector must have at least one coordinate"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    /// `a * self + b * other`, rejecting a non-finite result.
    pub fn lincomb(&self, a: f64, other: &StateVector, b: f64) -> Result<StateVector> {
        other.check_dim(self.dim())?;
        let values = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(x, y)| a * x + b * y)
            .collect();
        StateVector::new(values)
    }

    pub fn scale(&self, a: f64) -> Result<StateVector> {
        StateVector::new(self.0.iter().map(|x| a * x).collect())
    }

    pub fn add(&self, other: &StateVector) -> Result<StateVector> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &StateVector) -> Result<StateVector> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance; both vectors must share a dimension.
    pub fn distance(&self, other: &StateVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖self − other‖ / ‖other‖`, falling back to the absolute error when `other` is zero.
    pub fn relative_error(&self, other: &StateVector) -> f64 {
        let diff = self.distance(other);
        let scale = other.norm();
        if scale > 0.0 {
            diff / scale
        } else {
            diff
        }
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        StateVector::new(values)
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(v: StateVector) -> Vec<f64> {
        v.0
    }
}
