//! Arithmetic on the n-torus `R^n / (wZ)^n`.
//!
//! Points are stored as raw coordinates and only reduced to the fundamental
//! cell `[-w/2, w/2]^n` when a difference or a distance is needed. Exact ties
//! at `±w/2` are resolved to `+w/2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};

/// Dimension and width of a cubic torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusConfig {
    pub dim: usize,
    pub width: f64,
}

impl TorusConfig {
    pub fn new(dim: usize, width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(invalid("width", format!("must be positive and finite, got {width}")));
        }
        Ok(Self { dim, width })
    }

    /// The unit torus, whose width equals the sphere diameter.
    pub fn unit(dim: usize) -> Self {
        Self { dim, width: 1.0 }
    }

    /// Largest possible torus distance, reached at the half-width corner.
    pub fn max_distance(&self) -> f64 {
        0.5 * self.width * (self.dim as f64).sqrt()
    }
}

/// A point or displacement on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusVector(pub Vec<f64>);

impl TorusVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Coset representative with every component in `(-w/2, w/2]`.
    pub fn reduced(&self, width: f64) -> Self {
        reduce(&self.0, width)
    }
}

impl From<Vec<f64>> for TorusVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for TorusVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Reduces one coordinate into `(-w/2, w/2]`.
#[inline]
pub fn reduce_scalar(y: f64, width: f64) -> f64 {
    let k = (y / width - 0.5).ceil();
    if k == 0.0 {
        y
    } else {
        y - width * k
    }
}

/// Componentwise coset reduction.
pub fn reduce(y: &[f64], width: f64) -> TorusVector {
    TorusVector(y.iter().map(|&c| reduce_scalar(c, width)).collect())
}

/// Squared torus distance between two raw coordinate slices of equal length.
#[inline]
pub fn distance_sq_unchecked(x: &[f64], y: &[f64], width: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = reduce_scalar(a - b, width);
            d * d
        })
        .sum()
}

/// Euclidean norm of the reduced difference `x - x'`.
pub fn torus_distance(x: &[f64], other: &[f64], width: f64) -> Result<f64> {
    check_dim(x.len(), other.len())?;
    Ok(distance_sq_unchecked(x, other, width).sqrt())
}

/// Reflection of `x` through the coset element of `p` nearest to it:
/// `x + 2 [p - x]_w`.
pub fn torus_reflect(x: &[f64], p: &[f64], width: f64) -> Result<TorusVector> {
    check_dim(x.len(), p.len())?;
    Ok(TorusVector(
        x.iter()
            .zip(p)
            .map(|(&a, &b)| a + 2.0 * reduce_scalar(b - a, width))
            .collect(),
    ))
}

/// The torus form of the RRR update: `x + beta [d]_w`. The result is left
/// unreduced.
pub fn torus_increment(x: &[f64], d: &[f64], beta: f64, width: f64) -> Result<TorusVector> {
    check_dim(x.len(), d.len())?;
    Ok(TorusVector(
        x.iter()
            .zip(d)
            .map(|(&a, &b)| a + beta * reduce_scalar(b, width))
            .collect(),
    ))
}
