//! Dense vector primitives shared by every other module.
//!
//! Everything in the reference path is `f64`. [`UnitVector`] is the currency
//! of the system: encoder outputs, hierarchy centroids and index rows are all
//! unit-norm.

use std::ops::Deref;

use crate::error::{HceError, Result};

/// Vectors with an L2 norm at or below this are rejected by [`normalize`].
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Tolerance on `|‖v‖ - 1|` accepted by [`UnitVector`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

// Inputs whose squared norm is already this close to one are returned as-is,
// which is what makes `normalize` idempotent bit-for-bit.
const ALREADY_UNIT: f64 = 1e-12;

/// A finite vector of arbitrary norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|x| x.is_finite()) {
            Ok(DenseVector(values))
        } else {
            Err(HceError::NonFinite)
        }
    }

    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for DenseVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A vector with `|‖v‖₂ − 1| ≤ 1e-9`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `values` after checking the unit-norm invariant.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.iter().all(|x| x.is_finite()) {
            return Err(HceError::NonFinite);
        }
        let n = l2_norm(&values);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(HceError::Format(format!("expected a unit vector, norm is {n}")));
        }
        Ok(UnitVector(values))
    }

    /// The standard basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_normalized_unchecked(values: Vec<f64>) -> Self {
        UnitVector(values)
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<UnitVector> for DenseVector {
    fn from(v: UnitVector) -> Self {
        DenseVector(v.0)
    }
}

/// Plain dot product. Callers guarantee equal lengths.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(HceError::NonFinite);
    }
    let sq = dot(v, v);
    if (sq - 1.0).abs() <= ALREADY_UNIT {
        return Ok(UnitVector(v.to_vec()));
    }
    let norm = sq.sqrt();
    if norm <= ZERO_NORM_EPS {
        return Err(HceError::ZeroNorm { norm });
    }
    Ok(UnitVector(v.iter().map(|x| x / norm).collect()))
}

/// `Σ uᵢvᵢ`, checking that the lengths agree.
pub fn inner_product(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(HceError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(dot(u, v))
}

/// `y += a·x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
