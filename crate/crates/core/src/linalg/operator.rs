use super::LinalgError;
use crate::scalar::Real;

/// A linear map given by its action.
pub trait LinearOperator<T> {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError>;

    fn apply_new(&self, x: &[T]) -> Result<Vec<T>, LinalgError>
    where
        T: Real,
    {
        let mut y = vec![T::zero(); self.nrows()];
        self.apply(x, &mut y)?;
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl<T: Real> LinearOperator<T> for Identity {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        y.copy_from_slice(x);
        Ok(())
    }
}

/// Square operator backed by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<T, F> LinearOperator<T> for FnOperator<F>
where
    F: Fn(&[T], &mut [T]) -> Result<(), LinalgError>,
{
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[T], y: &mut [T]) -> Result<(), LinalgError> {
        (self.f)(x, y)
    }
}
