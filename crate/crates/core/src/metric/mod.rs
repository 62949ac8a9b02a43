//! Finite metric and ultrametric spaces.
//!
//! Points are addressed two ways. [`PointId`] is the external, 1-based name
//! (`1..=n`) used in files, reports and on the command line. Everything that
//! implements [`MetricSpace`] is indexed 0-based; conversion happens at the
//! boundary through [`PointId::index`] and [`PointId::from_index`].

mod dendrogram;
mod io;
mod matrix;
mod oracle;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dendrogram::{Dendrogram, DendrogramNode};
pub use io::{load_instance, parse_dendrogram, parse_matrix, write_dendrogram, write_matrix};
pub use matrix::DistanceMatrix;
pub use oracle::DistanceOracle;
pub use validate::{
    isosceles_check, validate, validate_with, ValidateOptions, Validation, Verdict, Witness,
    DEFAULT_FULL_VALIDATION_CAP,
};

/// Relative tolerance for axiom checks.
pub const REL_TOL: f64 = 1e-9;
/// Absolute tolerance floor used near zero.
pub const ABS_TOL: f64 = 1e-12;

/// `a <= b` up to the axiom-check tolerance.
#[inline]
pub fn approx_le(a: f64, b: f64) -> bool {
    a <= b + tolerance(a, b)
}

/// `a == b` up to the axiom-check tolerance.
#[inline]
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= tolerance(a, b)
}

#[inline]
fn tolerance(a: f64, b: f64) -> f64 {
    (REL_TOL * a.abs().max(b.abs())).max(ABS_TOL)
}

/// 1-based point identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(u32);

impl PointId {
    /// Builds an id from its 1-based value. Zero is rejected.
    pub fn new(id: u32) -> Result<Self> {
        if id == 0 {
            return Err(Error::domain("point ids are 1-based; got 0"));
        }
        Ok(PointId(id))
    }

    /// Builds an id from a 0-based index.
    pub fn from_index(index: usize) -> Self {
        PointId(u32::try_from(index + 1).expect("point index exceeds u32"))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based index.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    /// 0-based index after checking `self <= n`.
    pub fn checked_index(self, n: usize) -> Result<usize> {
        let i = self.index();
        if i < n {
            Ok(i)
        } else {
            Err(Error::domain(format!(
                "point {} out of range for a space of {n} points",
                self.0
            )))
        }
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Read access to a finite metric over points `0..len()`.
///
/// Implementations may assume indices are in range; callers that take
/// external input go through [`PointId::checked_index`] first.
pub trait MetricSpace {
    fn len(&self) -> usize;

    fn distance(&self, a: usize, b: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: MetricSpace + ?Sized> MetricSpace for &S {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        (**self).distance(a, b)
    }
}

/// A finite space backed by either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Matrix(DistanceMatrix),
    Dendrogram(Dendrogram),
}

impl Space {
    /// Dense copy of the distance function.
    pub fn to_matrix(&self) -> DistanceMatrix {
        match self {
            Space::Matrix(m) => m.clone(),
            Space::Dendrogram(d) => d.to_matrix(),
        }
    }

    /// Multiplies every distance by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Space> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::domain(format!("scale factor must be positive, got {factor}")));
        }
        Ok(match self {
            Space::Matrix(m) => Space::Matrix(m.scaled(factor)),
            Space::Dendrogram(d) => Space::Dendrogram(d.scaled(factor)),
        })
    }
}

impl MetricSpace for Space {
    fn len(&self) -> usize {
        match self {
            Space::Matrix(m) => m.len(),
            Space::Dendrogram(d) => d.len(),
        }
    }

    #[inline]
    fn distance(&self, a: usize, b: usize) -> f64 {
        match self {
            Space::Matrix(m) => m.distance(a, b),
            Space::Dendrogram(d) => d.distance(a, b),
        }
    }
}

impl From<DistanceMatrix> for Space {
    fn from(m: DistanceMatrix) -> Self {
        Space::Matrix(m)
    }
}

impl From<Dendrogram> for Space {
    fn from(d: Dendrogram) -> Self {
        Space::Dendrogram(d)
    }
}
