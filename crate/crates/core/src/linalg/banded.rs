use super::ordering::{bandwidth, reverse_cuthill_mckee};
use super::{CsrMatrix, LinalgError, LinearOperator};
use crate::scalar::{norm2, Real};

/// Banded LU factorisation with partial pivoting (LAPACK `gbtf2` layout).
///
/// The matrix is stored column by column; column `j` holds rows
/// `j - kl - ku ..= j + kl`, the extra `kl` super-diagonals absorbing the
/// fill created by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<T>,
    piv: Vec<usize>,
    min_pivot_ratio: T,
}

impl<T: Real> BandedLu<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ld + self.kl + self.ku + i - j
    }

    /// Factorise `P^T A P` where `perm[new] = old`.
    pub fn factor(a: &CsrMatrix<T>, perm: &[usize]) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(LinalgError::Dimension { expected: n, got: perm.len().min(a.ncols()) });
        }
        let (kl, ku) = bandwidth(a, perm);
        let ld = 2 * kl + ku + 1;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut lu = Self { n, kl, ku, ld, ab: vec![T::zero(); ld * n], piv: vec![0; n], min_pivot_ratio: T::one() };
        let mut max_abs = T::zero();
        for r in 0..n {
            for (c, v) in a.row(r) {
                let k = lu.at(inv[r], inv[c]);
                lu.ab[k] += v;
                max_abs = max_abs.max(v.abs());
            }
        }
        lu.eliminate(max_abs)?;
        Ok(lu)
    }

    fn eliminate(&mut self, max_abs: T) -> Result<(), LinalgError> {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        let kv = kl + ku;
        let tiny = max_abs * T::epsilon() * T::lit(16.0);
        let mut ju = 0usize;
        let (mut pmin, mut pmax) = (T::infinity(), T::zero());
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut p = 0;
            let mut best = T::zero();
            for r in 0..=km {
                let v = self.ab[col + r].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.piv[j] = j + p;
            pmin = pmin.min(best);
            pmax = pmax.max(best);
            if best <= tiny || !best.is_finite() {
                return Err(LinalgError::Singular {
                    index: j,
                    pivot: best.to_f64_lossy(),
                    max_abs: max_abs.to_f64_lossy(),
                    ratio: (best / pmax.max(T::min_positive_value())).to_f64_lossy(),
                });
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let base = c * ld + kv + j - c;
                    self.ab.swap(base, base + p);
                }
            }
            let d = self.ab[col];
            for r in 1..=km {
                self.ab[col + r] /= d;
            }
            if km == 0 {
                continue;
            }
            let (head, tail) = self.ab.split_at_mut((j + 1) * ld);
            let lcol = &head[col + 1..col + 1 + km];
            for c in j + 1..=ju {
                let base = (c - j - 1) * ld + kv + j - c;
                let u = tail[base];
                if u != T::zero() {
                    let dst = &mut tail[base + 1..base + 1 + km];
                    for (x, &l) in dst.iter_mut().zip(lcol) {
                        *x -= l * u;
                    }
                }
            }
        }
        self.min_pivot_ratio = pmin / pmax.max(T::min_positive_value());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Ratio of the smallest to the largest pivot, a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> T {
        self.min_pivot_ratio
    }

    /// Solve in the permuted numbering, in place.
    pub fn solve_permuted(&self, x: &mut [T]) {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        let kv = kl + ku;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            if xj != T::zero() {
                let col = j * ld + kv;
                for r in 1..=km {
                    x[j + r] -= self.ab[col + r] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ld + kv;
            x[j] /= self.ab[col];
            let xj = x[j];
            if xj != T::zero() {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    x[i] -= self.ab[col + i - j] * xj;
                }
            }
        }
    }
}

/// Direct solver for a stored sparse matrix: bandwidth-reducing ordering,
/// banded LU, and one step of iterative refinement when the residual
/// check asks for it.
#[derive(Debug, Clone)]
pub struct DirectSolver<T> {
    matrix: CsrMatrix<T>,
    perm: Vec<usize>,
    lu: BandedLu<T>,
    residual_bound: T,
}

impl<T: Real> DirectSolver<T> {
    /// `ordering` is `perm[new] = old`; computed by reverse Cuthill-McKee
    /// when absent.
    pub fn new(matrix: CsrMatrix<T>, ordering: Option<Vec<usize>>, residual_bound: T) -> Result<Self, LinalgError> {
        let perm = ordering.unwrap_or_else(|| reverse_cuthill_mckee(&matrix));
        let lu = BandedLu::factor(&matrix, &perm)?;
        Ok(Self { matrix, perm, lu, residual_bound })
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn ordering(&self) -> &[usize] {
        &self.perm
    }

    pub fn factorization(&self) -> &BandedLu<T> {
        &self.lu
    }

    fn raw_solve(&self, b: &[T]) -> Vec<T> {
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        self.lu.solve_permuted(&mut y);
        let mut x = vec![T::zero(); b.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    fn relative_residual(&self, x: &[T], b: &[T]) -> (Vec<T>, T) {
        let ax = self.matrix.matvec(x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &yi)| bi - yi).collect();
        let bn = norm2(b);
        let rel = if bn > T::zero() { norm2(&r) / bn } else { norm2(&r) };
        (r, rel)
    }

    /// Solve `A x = b` with `|Ax - b| / |b|` bounded by the configured limit.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        if b.len() != self.lu.dim() {
            return Err(LinalgError::Dimension { expected: self.lu.dim(), got: b.len() });
        }
        let mut x = self.raw_solve(b);
        let (mut r, mut rel) = self.relative_residual(&x, b);
        for _ in 0..2 {
            if rel <= self.residual_bound {
                break;
            }
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            (r, rel) = self.relative_residual(&x, b);
        }
        if rel > self.residual_bound || !rel.is_finite() {
            return Err(LinalgError::Residual {
                residual: rel.to_f64_lossy(),
                bound: self.residual_bound.to_f64_lossy(),
            });
        }
        Ok(x)
    }
}

impl<T: Real> LinearOperator<T> for DirectSolver<T> {
    fn nrows(&self) -> usize {
        self.lu.dim()
    }
    fn ncols(&self) -> usize {
        self.lu.dim()
    }
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        let sol = self.solve(x)?;
        y.copy_from_slice(&sol);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_direct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let i = CsrMatrix::from_triplets(3, 3, (0..3).map(|k| (k, k, 1.0)).collect());
        assert_eq!(solve_direct(&i, &[1.0, -2.0, 5.0]).unwrap(), vec![1.0, -2.0, 5.0]);
        let d = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 1, 3.0)]);
        assert_eq!(solve_direct(&d, &[2.0, 3.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let g: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut s: f64 = (0..n).map(|k| g[i][k] * g[j][k]).sum();
                if i == j {
                    s += n as f64;
                }
                trip.push((i, j, s));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trip);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_direct(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) / norm2(&b) <= 1e-12);
    }

    #[test]
    fn zero_diagonal_needs_pivoting() {
        // saddle-type block [[2, 1], [1, 0]] repeated along a chain
        let n = 40;
        let mut trip = Vec::new();
        for k in 0..n / 2 {
            let (a, b) = (2 * k, 2 * k + 1);
            trip.extend([(a, a, 2.0), (a, b, 1.0), (b, a, 1.0)]);
            if k + 1 < n / 2 {
                trip.extend([(b, a + 2, 0.5), (a + 2, b, 0.5)]);
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trip);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&xs);
        let x = solve_direct(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&xs) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_reports_pivot() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(solve_direct(&a, &[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn deterministic() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 4.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 5.0)]);
        let b = [1.0, 2.0, 3.0];
        assert_eq!(solve_direct(&a, &b).unwrap(), solve_direct(&a, &b).unwrap());
    }
}
