use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;

use super::{MetricSpace, PointId};

/// Query-counting view of a space.
///
/// Every distance access, through [`query`](Self::query) or through the
/// [`MetricSpace`] impl, bumps the counter by one, including `d(x, x)`. The
/// counter is atomic so an oracle may be shared across threads; counts are
/// then attributed jointly.
#[derive(Debug)]
pub struct DistanceOracle<S> {
    space: S,
    queries: AtomicU64,
}

impl<S: MetricSpace> DistanceOracle<S> {
    pub fn new(space: S) -> Self {
        DistanceOracle {
            space,
            queries: AtomicU64::new(0),
        }
    }

    /// `d(a, b)`, counted.
    pub fn query(&self, a: PointId, b: PointId) -> Result<f64> {
        let n = self.space.len();
        let (i, j) = (a.checked_index(n)?, b.checked_index(n)?);
        Ok(self.distance(i, j))
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    /// The backing space; reads through it are not counted.
    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn into_inner(self) -> S {
        self.space
    }
}

impl<S: MetricSpace> MetricSpace for DistanceOracle<S> {
    fn len(&self) -> usize {
        self.space.len()
    }

    #[inline]
    fn distance(&self, a: usize, b: usize) -> f64 {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.space.distance(a, b)
    }
}
