use super::{LinalgError, LinearOperator};
use crate::scalar::{dot, norm2, Real};

/// Result of a Krylov solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Final relative residual `|b - Ax| / |b|` as tracked by the Arnoldi
    /// recurrence.
    pub residual: T,
    pub converged: bool,
}

/// Flexible GMRES (right preconditioned, no restart).
///
/// The preconditioner may change between iterations; the preconditioned
/// directions are stored alongside the Arnoldi basis. A vanishing Arnoldi
/// norm that does not coincide with convergence is reported as
/// [`LinalgError::Breakdown`]; running out of iterations returns the best
/// iterate with `converged == false`.
pub fn fgmres<T, A, M>(
    op: &A,
    precond: &M,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    maxit: usize,
) -> Result<KrylovOutcome<T>, LinalgError>
where
    T: Real,
    A: LinearOperator<T> + ?Sized,
    M: LinearOperator<T> + ?Sized,
{
    let n = op.nrows();
    if b.len() != n || op.ncols() != n {
        return Err(LinalgError::Dimension { expected: n, got: b.len() });
    }
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let bnorm = norm2(b);
    let scale = if bnorm > T::zero() { bnorm } else { T::one() };

    let mut r = op.apply_new(&x)?;
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let beta = norm2(&r);
    if beta <= tol * scale {
        return Ok(KrylovOutcome { x, iterations: 0, residual: beta / scale, converged: true });
    }

    let mut v: Vec<Vec<T>> = vec![r.iter().map(|&ri| ri / beta).collect()];
    let mut z: Vec<Vec<T>> = Vec::new();
    // Hessenberg columns after Givens rotations (upper triangular part)
    let mut h: Vec<Vec<T>> = Vec::new();
    let mut cs: Vec<T> = Vec::new();
    let mut sn: Vec<T> = Vec::new();
    let mut g = vec![beta];

    let finish = |x: &mut Vec<T>, h: &Vec<Vec<T>>, g: &[T], z: &Vec<Vec<T>>| {
        let k = h.len();
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yj, zj) in y.iter().zip(z) {
            for (xi, &zi) in x.iter_mut().zip(zj) {
                *xi += *yj * zi;
            }
        }
    };

    for k in 0..maxit {
        let zk = precond.apply_new(&v[k])?;
        let mut w = op.apply_new(&zk)?;
        z.push(zk);
        let wnorm0 = norm2(&w);
        let mut col = vec![T::zero(); k + 2];
        // modified Gram-Schmidt with one reorthogonalisation pass
        for _pass in 0..2 {
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] += hij;
                for (wj, &vj) in w.iter_mut().zip(vi) {
                    *wj -= hij * vj;
                }
            }
        }
        let hnext = norm2(&w);
        col[k + 1] = hnext;
        for i in 0..k {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let denom = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
        let (c, s) = if denom > T::zero() { (col[k] / denom, col[k + 1] / denom) } else { (T::one(), T::zero()) };
        cs.push(c);
        sn.push(s);
        col[k] = denom;
        col.truncate(k + 1);
        h.push(col);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        let res = g[k + 1].abs() / scale;

        let breakdown = hnext <= T::epsilon() * wnorm0.max(T::min_positive_value());
        if res <= tol || breakdown {
            if h[k][k] == T::zero() {
                return Err(LinalgError::Breakdown { iteration: k + 1, residual: res.to_f64_lossy() });
            }
            finish(&mut x, &h, &g, &z);
            if res <= tol {
                return Ok(KrylovOutcome { x, iterations: k + 1, residual: res, converged: true });
            }
            // lucky breakdown claims an exact solution; verify it
            let mut rr = op.apply_new(&x)?;
            for (ri, &bi) in rr.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let true_res = norm2(&rr) / scale;
            if true_res <= tol {
                return Ok(KrylovOutcome { x, iterations: k + 1, residual: true_res, converged: true });
            }
            return Err(LinalgError::Breakdown { iteration: k + 1, residual: true_res.to_f64_lossy() });
        }
        v.push(w.iter().map(|&wi| wi / hnext).collect());
    }
    let res = g[maxit].abs() / scale;
    finish(&mut x, &h, &g, &z);
    Ok(KrylovOutcome { x, iterations: maxit, residual: res, converged: false })
}
