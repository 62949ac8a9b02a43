use crate::error::{Error, Result};

use super::MetricSpace;

/// Dense row-major `n x n` distance matrix.
///
/// Construction rejects shape problems, NaN and negative entries. Axiom
/// checks (symmetry, triangle inequalities) are left to
/// [`validate`](super::validate).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::format("matrix must have at least one point"));
        }
        if data.len() != n * n {
            return Err(Error::format(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        for (idx, &v) in data.iter().enumerate() {
            check_entry(v, idx / n, idx % n)?;
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::format(format!(
                    "matrix is not square: row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(n, data)
    }

    /// Builds a matrix by evaluating `f` on every ordered pair.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::from_flat(n, data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DistanceMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Applies a point relabeling: entry `(i, j)` of the result is entry
    /// `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::domain("not a permutation of the point set"));
        }
        Self::from_fn(n, |i, j| self.distance(perm[i], perm[j]))
    }
}

fn check_entry(v: f64, i: usize, j: usize) -> Result<()> {
    if v.is_nan() {
        return Err(Error::format(format!("NaN distance at ({}, {})", i + 1, j + 1)));
    }
    if v.is_infinite() {
        return Err(Error::format(format!("infinite distance at ({}, {})", i + 1, j + 1)));
    }
    if v < 0.0 {
        return Err(Error::format(format!(
            "negative distance {v} at ({}, {})",
            i + 1,
            j + 1
        )));
    }
    Ok(())
}

impl MetricSpace for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn distance(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(DistanceMatrix::from_rows::<Vec<f64>>(&[]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, f64::NAN], vec![1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn permutation_relabels() {
        let m = DistanceMatrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]]).unwrap();
        let p = m.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.distance(0, 1), 2.0);
        assert_eq!(p.distance(1, 2), 1.0);
        assert!(m.permuted(&[0, 0, 1]).is_err());
    }
}
