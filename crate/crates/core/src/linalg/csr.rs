use std::ops::{AddAssign, Mul};

use num_traits::Zero;

use super::operator::LinearOperator;
use super::LinalgError;
use crate::scalar::Real;

/// Compressed sparse row matrix.
///
/// Generic over the entry type so that incidence matrices can be kept in
/// exact integer arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<N> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<N>,
}

impl<N> CsrMatrix<N>
where
    N: Copy + Zero + AddAssign + Mul<Output = N> + PartialEq,
{
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// explicitly stored zeros are kept so the pattern is input-determined.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, N)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<N> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[N] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [N] {
        &mut self.values
    }

    /// Entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, N)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Position of entry `(r, c)` in the value array, if stored.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].binary_search(&c).ok().map(|k| span.start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> N {
        self.position(r, c).map_or(N::zero(), |k| self.values[k])
    }

    pub fn triplets(&self) -> Vec<(usize, usize, N)> {
        (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect())
    }

    pub fn map<M, F>(&self, f: F) -> CsrMatrix<M>
    where
        F: Fn(N) -> M,
    {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sparse product `self * other`; structural zeros produced by
    /// cancellation are dropped.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions");
        let mut trip = Vec::new();
        let mut acc: Vec<N> = vec![N::zero(); other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = N::zero();
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                if acc[c] != N::zero() {
                    trip.push((r, c, acc[c]));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, trip)
    }

    /// No stored nonzero entry.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == N::zero())
    }

    /// Submatrix keeping the listed rows and columns (in the given order).
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in rows.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if col_map[c] != usize::MAX {
                    trip.push((new_r, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<N>> {
        let mut d = vec![vec![N::zero(); self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[r][c] += v;
            }
        }
        d
    }
}

impl<T: Real> CsrMatrix<T> {
    /// `y = A x`
    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A^T x`
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let mut s = T::zero();
        for (r, &xr) in x.iter().enumerate() {
            let mut row = T::zero();
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.values[k] * y[self.indices[k]];
            }
            s += xr * row;
        }
        s
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        if x.len() != self.ncols {
            return Err(LinalgError::Dimension { expected: self.ncols, got: x.len() });
        }
        self.matvec_into(x, y);
        Ok(())
    }
}
