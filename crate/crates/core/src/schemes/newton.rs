use super::SchemeError;
use crate::scalar::{norm2, Real};

/// Stopping rule of the Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_iter: usize,
    /// Backtracking on the residual norm.
    pub damping: bool,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self { abs_tol: T::lit(1e-11), rel_tol: T::lit(1e-10), max_iter: 50, damping: false }
    }
}

impl<T: Real> NewtonConfig<T> {
    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.abs_tol > T::zero() && self.rel_tol > T::zero()) || self.max_iter == 0 {
            return Err(SchemeError::Config("newton tolerances must be positive and max_iter >= 1".into()));
        }
        Ok(())
    }
}

/// A square nonlinear system with a way to solve its linearisation.
pub trait NonlinearSystem<T> {
    fn residual(&mut self, x: &[T]) -> Result<Vec<T>, SchemeError>;
    /// Solve `J(x) d = rhs`.
    fn solve_jacobian(&mut self, x: &[T], rhs: &[T]) -> Result<Vec<T>, SchemeError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: T,
    pub initial_residual: T,
}

/// Newton iteration until `|r(x)| <= max(abs_tol, rel_tol |r(x0)|)`.
/// At least one update is taken unless `r(x0)` vanishes exactly.
pub fn newton_solve<T: Real, S: NonlinearSystem<T> + ?Sized>(
    sys: &mut S,
    x0: Vec<T>,
    cfg: &NewtonConfig<T>,
) -> Result<NewtonOutcome<T>, SchemeError> {
    let mut x = x0;
    let mut r = sys.residual(&x)?;
    let r0 = norm2(&r);
    if !r0.is_finite() {
        return Err(SchemeError::NewtonDiverged { iterations: 0, residual: f64::INFINITY });
    }
    let target = cfg.abs_tol.max(cfg.rel_tol * r0);
    let mut rn = r0;
    let mut it = 0;
    while it == 0 && r0 > T::zero() || rn > target {
        if it == cfg.max_iter {
            return Err(SchemeError::NewtonDiverged { iterations: it, residual: rn.to_f64_lossy() });
        }
        let neg: Vec<T> = r.iter().map(|&v| -v).collect();
        let d = sys.solve_jacobian(&x, &neg)?;
        let mut step = T::one();
        loop {
            let trial: Vec<T> = x.iter().zip(&d).map(|(&a, &b)| a + step * b).collect();
            let rt = sys.residual(&trial)?;
            let nt = norm2(&rt);
            if !cfg.damping || (nt.is_finite() && nt < rn) || step < T::lit(1e-3) {
                x = trial;
                r = rt;
                rn = nt;
                break;
            }
            step *= T::lit(0.5);
        }
        it += 1;
        if !rn.is_finite() {
            return Err(SchemeError::NewtonDiverged { iterations: it, residual: f64::INFINITY });
        }
    }
    Ok(NewtonOutcome { x, iterations: it, residual: rn, initial_residual: r0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve_direct, CsrMatrix};

    struct Scalar {
        trace: Vec<f64>,
    }

    impl NonlinearSystem<f64> for Scalar {
        fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>, SchemeError> {
            self.trace.push(x[0]);
            Ok(vec![x[0] * x[0] - 4.0])
        }
        fn solve_jacobian(&mut self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>, SchemeError> {
            Ok(vec![rhs[0] / (2.0 * x[0])])
        }
    }

    #[test]
    fn scalar_quadratic_convergence() {
        let mut s = Scalar { trace: Vec::new() };
        let cfg = NewtonConfig { abs_tol: 1e-14, rel_tol: 1e-15, ..NewtonConfig::default() };
        let out = newton_solve(&mut s, vec![3.0], &cfg).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-15);
        let err: Vec<f64> = s.trace.iter().map(|x| (x - 2.0).abs()).filter(|&e| e > 1e-12).collect();
        for w in err.windows(2) {
            // e_{k+1} = e_k^2 / (2 x_k)
            assert!(w[1] <= w[0] * w[0], "{w:?}");
        }
        assert!(out.iterations <= 6);
    }

    struct Linear {
        a: CsrMatrix<f64>,
        b: Vec<f64>,
    }

    impl NonlinearSystem<f64> for Linear {
        fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>, SchemeError> {
            Ok(self.a.matvec(x).iter().zip(&self.b).map(|(p, q)| p - q).collect())
        }
        fn solve_jacobian(&mut self, _: &[f64], rhs: &[f64]) -> Result<Vec<f64>, SchemeError> {
            Ok(solve_direct(&self.a, rhs)?)
        }
    }

    #[test]
    fn linear_residual_one_iteration() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 2.0)]);
        let mut s = Linear { a, b: vec![1.0, 2.0, 3.0] };
        let out = newton_solve(&mut s, vec![0.0; 3], &NewtonConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.residual <= 1e-14);
    }

    #[test]
    fn exact_start_takes_no_iteration() {
        let mut s = Scalar { trace: Vec::new() };
        let out = newton_solve(&mut s, vec![2.0], &NewtonConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn iteration_cap_reported() {
        let mut s = Scalar { trace: Vec::new() };
        let cfg = NewtonConfig { max_iter: 2, abs_tol: 1e-15, rel_tol: 1e-15, damping: false };
        let r = newton_solve(&mut s, vec![100.0], &cfg);
        assert!(matches!(r, Err(SchemeError::NewtonDiverged { iterations: 2, .. })));
    }
}
