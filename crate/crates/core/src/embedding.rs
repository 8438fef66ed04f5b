//! Appearance-embedding arithmetic.
//!
//! All similarity in the engine is cosine similarity over double-precision
//! vectors. Comparisons downstream use exact floating-point ordering, so every
//! caller goes through [`cosine`] to keep results bit-identical.

use std::fmt;

use crate::error::{Error, Result};

/// Margin of the triplet hinge loss used to train the similarity model.
pub const DEFAULT_TRIPLET_MARGIN: f64 = 0.05;

/// A fixed-dimension appearance embedding with finite entries.
#[derive(Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps `values`, rejecting vectors shorter than 2 or with non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "feature dimension must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature entry {i} is not finite")));
        }
        Ok(Self(values))
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

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<FeatureVector> {
        FeatureVector::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn check_same_dim(&self, other: &FeatureVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FeatureVector").field(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl TryFrom<&[f64]> for FeatureVector {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        FeatureVector::new(values.to_vec())
    }
}

/// Cosine similarity `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
///
/// The denominator is evaluated as `sqrt(|a|^2 |b|^2)` so that `cosine(v, v)`
/// is exactly 1.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.check_same_dim(b)?;
    let na = a.norm_squared();
    let nb = b.norm_squared();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero vector is undefined"));
    }
    let s = a.dot(b) / (na * nb).sqrt();
    Ok(s.clamp(-1.0, 1.0))
}

/// Scales `v` to unit Euclidean length.
pub fn normalize(v: &FeatureVector) -> Result<FeatureVector> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    FeatureVector::new(v.as_slice().iter().map(|x| x / n).collect())
}

/// Cosine distances of `a` and `b` to `template`: `(1 - cos(t, a), 1 - cos(t, b))`.
pub fn triplet_distances(
    template: &FeatureVector,
    a: &FeatureVector,
    b: &FeatureVector,
) -> Result<(f64, f64)> {
    let d1 = 1.0 - cosine(template, a)?;
    let d2 = 1.0 - cosine(template, b)?;
    Ok((d1, d2))
}

/// Hinge loss `max(0, margin - (d2 - d1) * s)` with `s = +1` when `a_closer`
/// (the ground truth says `a` is the nearer sample) and `s = -1` otherwise.
pub fn triplet_hinge_loss(d1: f64, d2: f64, a_closer: bool, margin: f64) -> Result<f64> {
    if margin.is_nan() || margin <= 0.0 || !margin.is_finite() {
        return Err(Error::invalid(format!("margin must be positive, got {margin}")));
    }
    if !d1.is_finite() || !d2.is_finite() {
        return Err(Error::invalid("triplet distances must be finite"));
    }
    let sign = if a_closer { 1.0 } else { -1.0 };
    Ok((margin - (d2 - d1) * sign).max(0.0))
}
