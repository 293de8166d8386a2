use std::cell::Cell;

use super::{fgmres, CsrMatrix, DenseMatrix, DirectSolver, FnOperator, Identity, LinalgError, LinearOperator};
use crate::scalar::{dot, norm2, Real};

/// `[[A, B], [C, 0]]` with a sparse field block `A` and a handful of
/// multiplier unknowns. `B` is stored as dense columns, `C` as dense rows.
#[derive(Debug, Clone)]
pub struct BlockSaddleSystem<T> {
    pub a: CsrMatrix<T>,
    pub b_cols: Vec<Vec<T>>,
    pub c_rows: Vec<Vec<T>>,
}

impl<T: Real> BlockSaddleSystem<T> {
    pub fn new(a: CsrMatrix<T>, b_cols: Vec<Vec<T>>, c_rows: Vec<Vec<T>>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::Dimension { expected: n, got: a.ncols() });
        }
        if b_cols.len() != c_rows.len() {
            return Err(LinalgError::Dimension { expected: b_cols.len(), got: c_rows.len() });
        }
        for v in b_cols.iter().chain(&c_rows) {
            if v.len() != n {
                return Err(LinalgError::Dimension { expected: n, got: v.len() });
            }
        }
        Ok(Self { a, b_cols, c_rows })
    }

    pub fn field_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn multiplier_dim(&self) -> usize {
        self.b_cols.len()
    }

    pub fn dim(&self) -> usize {
        self.field_dim() + self.multiplier_dim()
    }

    /// `y = K x` for the full saddle matrix.
    pub fn apply_full(&self, x: &[T], y: &mut [T]) {
        let n = self.field_dim();
        let (xf, xl) = x.split_at(n);
        let (yf, yl) = y.split_at_mut(n);
        self.a.matvec_into(xf, yf);
        for (col, &l) in self.b_cols.iter().zip(xl) {
            for (yi, &bi) in yf.iter_mut().zip(col) {
                *yi += bi * l;
            }
        }
        for (yi, row) in yl.iter_mut().zip(&self.c_rows) {
            *yi = dot(row, xf);
        }
    }

    /// Monolithic dense copy, used as an independent reference solve.
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.field_dim();
        let m = self.dim();
        let mut d = DenseMatrix::zeros(m, m);
        for r in 0..n {
            for (c, v) in self.a.row(r) {
                d[(r, c)] += v;
            }
        }
        for (k, col) in self.b_cols.iter().enumerate() {
            for r in 0..n {
                d[(r, n + k)] = col[r];
            }
        }
        for (k, row) in self.c_rows.iter().enumerate() {
            for c in 0..n {
                d[(n + k, c)] = row[c];
            }
        }
        d
    }
}

/// The full saddle matrix as an operator.
pub struct SaddleOperator<'a, T>(pub &'a BlockSaddleSystem<T>);

impl<T: Real> LinearOperator<T> for SaddleOperator<'_, T> {
    fn nrows(&self) -> usize {
        self.0.dim()
    }
    fn ncols(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        if x.len() != self.0.dim() {
            return Err(LinalgError::Dimension { expected: self.0.dim(), got: x.len() });
        }
        self.0.apply_full(x, y);
        Ok(())
    }
}

/// Full block factorisation preconditioner
///
/// ```text
/// P^{-1} = [I  -A^{-1}B] [A^{-1}   0   ] [   I      0]
///          [0      I   ] [  0    S^{-1}] [-C A^{-1}  I]
/// ```
///
/// with `S = -C A^{-1} B`. `A` is applied through its direct
/// factorisation; `S` is never formed, its action costs one `A` solve and
/// it is inverted by an inner GMRES capped at `schur_maxit` iterations.
pub struct BlockPreconditioner<'a, T> {
    sys: &'a BlockSaddleSystem<T>,
    a_solver: &'a DirectSolver<T>,
    schur_maxit: usize,
    schur_tol: T,
    max_inner: Cell<usize>,
}

impl<'a, T: Real> BlockPreconditioner<'a, T> {
    pub fn new(sys: &'a BlockSaddleSystem<T>, a_solver: &'a DirectSolver<T>, schur_maxit: usize) -> Self {
        Self { sys, a_solver, schur_maxit, schur_tol: T::epsilon() * T::lit(100.0), max_inner: Cell::new(0) }
    }

    /// Largest inner Schur iteration count seen so far.
    pub fn max_inner_iterations(&self) -> usize {
        self.max_inner.get()
    }

    fn schur_action(&self, v: &[T], out: &mut [T]) -> Result<(), LinalgError> {
        let n = self.sys.field_dim();
        let mut bv = vec![T::zero(); n];
        for (col, &l) in self.sys.b_cols.iter().zip(v) {
            for (bi, &ci) in bv.iter_mut().zip(col) {
                *bi += ci * l;
            }
        }
        let w = self.a_solver.solve(&bv)?;
        for (o, row) in out.iter_mut().zip(&self.sys.c_rows) {
            *o = -dot(row, &w);
        }
        Ok(())
    }

    fn solve_schur(&self, rhs: &[T]) -> Result<Vec<T>, LinalgError> {
        let m = rhs.len();
        let s = FnOperator::new(m, |x: &[T], y: &mut [T]| self.schur_action(x, y));
        match fgmres(&s, &Identity(m), rhs, None, self.schur_tol, self.schur_maxit) {
            Ok(out) => {
                self.max_inner.set(self.max_inner.get().max(out.iterations));
                if out.x.iter().any(|v| !v.is_finite()) {
                    return Err(LinalgError::SingularSchur { residual: f64::INFINITY });
                }
                // two multipliers are resolved exactly in two steps; a large
                // true residual means S is (numerically) singular
                let mut sx = vec![T::zero(); m];
                self.schur_action(&out.x, &mut sx)?;
                let rn = norm2(rhs);
                let res = norm2(&rhs.iter().zip(&sx).map(|(&a, &b)| a - b).collect::<Vec<_>>())
                    / if rn > T::zero() { rn } else { T::one() };
                if res > T::lit(1e-8) {
                    return Err(LinalgError::SingularSchur { residual: res.to_f64_lossy() });
                }
                Ok(out.x)
            }
            Err(LinalgError::Breakdown { residual, .. }) => Err(LinalgError::SingularSchur { residual }),
            Err(e) => Err(e),
        }
    }
}

impl<T: Real> LinearOperator<T> for BlockPreconditioner<'_, T> {
    fn nrows(&self) -> usize {
        self.sys.dim()
    }
    fn ncols(&self) -> usize {
        self.sys.dim()
    }
    fn apply(&self, r: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        let n = self.sys.field_dim();
        let (rf, rl) = r.split_at(n);
        let yf0 = self.a_solver.solve(rf)?;
        let rl2: Vec<T> = rl.iter().zip(&self.sys.c_rows).map(|(&ri, row)| ri - dot(row, &yf0)).collect();
        let xl = if rl2.is_empty() { Vec::new() } else { self.solve_schur(&rl2)? };
        let mut bx = vec![T::zero(); n];
        for (col, &l) in self.sys.b_cols.iter().zip(&xl) {
            for (bi, &ci) in bx.iter_mut().zip(col) {
                *bi += ci * l;
            }
        }
        let corr = self.a_solver.solve(&bx)?;
        let (yf, yl) = y.split_at_mut(n);
        for ((o, &a), &c) in yf.iter_mut().zip(&yf0).zip(&corr) {
            *o = a - c;
        }
        yl.copy_from_slice(&xl);
        Ok(())
    }
}
