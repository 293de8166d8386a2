use super::LinalgError;
use crate::scalar::{norm2, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![T::zero(); nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { nrows, ncols, data }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.nrows)
            .map(|i| {
                let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
                row.iter().zip(x).fold(T::zero(), |s, (&a, &b)| s + a * b)
            })
            .collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

/// LU factorisation with partial pivoting of a dense square matrix.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(a: DenseMatrix<T>) -> Result<Self, LinalgError> {
        if a.nrows != a.ncols {
            return Err(LinalgError::Dimension { expected: a.nrows, got: a.ncols });
        }
        let n = a.nrows;
        let mut lu = a.data;
        let max_abs = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = max_abs * T::epsilon() * T::from_usize_lossy(n.max(1));
        let mut piv = vec![0; n];
        let (mut pmin, mut pmax) = (T::infinity(), T::zero());
        for k in 0..n {
            let (mut p, mut best) = (k, T::zero());
            for i in k..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            pmin = pmin.min(best);
            pmax = pmax.max(best);
            if best <= tiny || !best.is_finite() {
                return Err(LinalgError::Singular {
                    index: k,
                    pivot: best.to_f64_lossy(),
                    max_abs: max_abs.to_f64_lossy(),
                    ratio: (best / pmax.max(T::min_positive_value())).to_f64_lossy(),
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let d = lu[k * n + k];
            for i in k + 1..n {
                let l = lu[i * n + k] / d;
                lu[i * n + k] = l;
                if l != T::zero() {
                    let (top, bottom) = lu.split_at_mut(i * n);
                    let urow = &top[k * n + k + 1..k * n + n];
                    let row = &mut bottom[k + 1..n];
                    for (r, &u) in row.iter_mut().zip(urow) {
                        *r -= l * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension { expected: n, got: b.len() });
        }
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Solve and verify the residual against the original matrix.
    pub fn solve_checked(&self, a: &DenseMatrix<T>, b: &[T], bound: T) -> Result<Vec<T>, LinalgError> {
        let x = self.solve(b)?;
        let ax = a.matvec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &yi)| bi - yi).collect();
        let bn = norm2(b);
        let rel = if bn > T::zero() { norm2(&r) / bn } else { norm2(&r) };
        if rel > bound {
            return Err(LinalgError::Residual { residual: rel.to_f64_lossy(), bound: bound.to_f64_lossy() });
        }
        Ok(x)
    }
}
