//! Linear algebra for the Newton systems: sparse storage, direct
//! factorisations, flexible GMRES, and the block factorisation
//! preconditioner for multiplier-augmented saddle systems.

mod banded;
mod csr;
mod dense;
mod gmres;
mod operator;
mod ordering;
mod saddle;

pub use banded::{BandedLu, DirectSolver};
pub use csr::CsrMatrix;
pub use dense::{DenseLu, DenseMatrix};
pub use gmres::{fgmres, KrylovOutcome};
pub use operator::{FnOperator, Identity, LinearOperator};
pub use ordering::reverse_cuthill_mckee;
pub use saddle::{BlockPreconditioner, BlockSaddleSystem, SaddleOperator};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular matrix: pivot {pivot:e} at step {index} (largest entry {max_abs:e}, pivot ratio {ratio:e})")]
    Singular { index: usize, pivot: f64, max_abs: f64, ratio: f64 },
    #[error("direct solve residual {residual:e} exceeds bound {bound:e}")]
    Residual { residual: f64, bound: f64 },
    #[error("Krylov breakdown at iteration {iteration} with relative residual {residual:e}")]
    Breakdown { iteration: usize, residual: f64 },
    #[error("Krylov solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular multiplier Schur complement (inner relative residual {residual:e})")]
    SingularSchur { residual: f64 },
    #[error("eigensolver stagnated after {iterations} iterations (relative change {change:e})")]
    EigenStagnation { iterations: usize, change: f64 },
}

/// Tolerances for the linear solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Relative residual target of the outer FGMRES iteration.
    pub outer_tol: T,
    pub outer_maxit: usize,
    /// Iteration cap for the inner GMRES on the multiplier Schur complement.
    pub schur_maxit: usize,
    /// Bound on `|Ax - b| / |b|` accepted from a direct solve.
    pub direct_residual: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { outer_tol: T::lit(1e-10), outer_maxit: 200, schur_maxit: 2, direct_residual: T::lit(1e-12) }
    }
}

/// Factorise a stored matrix (bandwidth-reducing ordering plus banded LU)
/// and solve `A x = b`.
pub fn solve_direct<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    let solver = DirectSolver::new(a.clone(), None, T::lit(1e-12))?;
    solver.solve(b)
}
