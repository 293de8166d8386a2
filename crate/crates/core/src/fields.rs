//! Analytic initial magnetic fields and their exactly solenoidal
//! discretisation.

use thiserror::Error;

use crate::feec::{interpolate, FeecError, FieldCoefficients, OperatorSet, SpaceKind};
use crate::linalg::{CsrMatrix, DirectSolver, LinalgError};
use crate::scalar::{norm2, norm_inf, Real, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldsError {
    #[error("invalid field parameter: {0}")]
    Parameter(String),
    #[error("divergence cleaning left |div B| = {divergence:e} (|B| = {norm:e})")]
    Cleaning { divergence: f64, norm: f64 },
    #[error(transparent)]
    Feec(#[from] FeecError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Braided field: six Gaussian twists on a uniform vertical background.
#[derive(Debug, Clone, PartialEq)]
pub struct E3Params<T> {
    pub b0: T,
    pub k: T,
    pub a: T,
    pub l: T,
    pub centers: [Vec3<T>; 6],
}

impl<T: Real> Default for E3Params<T> {
    fn default() -> Self {
        let c = |x: f64, z: f64| [T::lit(x), T::zero(), T::lit(z)];
        Self {
            b0: T::one(),
            k: T::lit(5.0),
            a: T::lit(2.0).sqrt(),
            l: T::lit(2.0),
            centers: [c(1.0, -20.0), c(-1.0, -12.0), c(1.0, -4.0), c(-1.0, 4.0), c(1.0, 12.0), c(-1.0, 20.0)],
        }
    }
}

impl<T: Real> E3Params<T> {
    pub fn validate(&self) -> Result<(), FieldsError> {
        if !(self.a > T::zero() && self.l > T::zero()) {
            return Err(FieldsError::Parameter(format!(
                "e3 twist radius and length must be positive (a={}, l={})",
                self.a, self.l
            )));
        }
        Ok(())
    }
}

pub fn eval_e3<T: Real>(x: Vec3<T>, p: &E3Params<T>) -> Vec3<T> {
    let mut b = [T::zero(), T::zero(), p.b0];
    let amp = T::lit(2.0) * p.k * p.b0 / p.a;
    let (a2, l2) = (p.a * p.a, p.l * p.l);
    for c in &p.centers {
        let (dx, dy, dz) = (x[0] - c[0], x[1] - c[1], x[2] - c[2]);
        let g = amp * (-(dx * dx) / a2 - dy * dy / a2 - dz * dz / l2).exp();
        b[0] -= g * dy;
        b[1] += g * dx;
    }
    b
}

/// Hopf fibration with winding numbers `omega1`, `omega2` and scale `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfParams<T> {
    pub omega1: T,
    pub omega2: T,
    pub s: T,
}

impl<T: Real> Default for HopfParams<T> {
    fn default() -> Self {
        Self { omega1: T::lit(3.0), omega2: T::lit(2.0), s: T::one() }
    }
}

impl<T: Real> HopfParams<T> {
    pub fn validate(&self) -> Result<(), FieldsError> {
        if self.omega1 == T::zero() && self.omega2 == T::zero() {
            return Err(FieldsError::Parameter("hopf winding numbers must not both vanish".into()));
        }
        if !(self.s >= T::zero()) {
            return Err(FieldsError::Parameter(format!("hopf scale must be non-negative, got {}", self.s)));
        }
        Ok(())
    }
}

pub fn eval_hopf<T: Real>(x: Vec3<T>, p: &HopfParams<T>) -> Result<Vec3<T>, FieldsError> {
    p.validate()?;
    let [x, y, z] = x;
    let (w1, w2) = (p.omega1, p.omega2);
    let r2 = x * x + y * y + z * z;
    let one = T::one();
    let two = T::lit(2.0);
    let pre = T::lit(4.0) * p.s.sqrt() / (T::PI() * (one + r2).powi(3) * (w1 * w1 + w2 * w2).sqrt());
    Ok([
        pre * two * (w2 * y - w1 * x * z),
        -pre * two * (w2 * x + w1 * y * z),
        pre * w1 * (-one + x * x + y * y - z * z),
    ])
}

/// One of the two benchmark configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialField<T> {
    E3(E3Params<T>),
    Hopf(HopfParams<T>),
}

impl<T: Real> InitialField<T> {
    pub fn name(&self) -> &'static str {
        match self {
            InitialField::E3(_) => "e3",
            InitialField::Hopf(_) => "hopf",
        }
    }

    pub fn validate(&self) -> Result<(), FieldsError> {
        match self {
            InitialField::E3(p) => p.validate(),
            InitialField::Hopf(p) => p.validate(),
        }
    }

    pub fn eval(&self, x: Vec3<T>) -> Vec3<T> {
        match self {
            InitialField::E3(p) => eval_e3(x, p),
            // parameters are validated on construction paths; fall back to
            // zero rather than panic in an evaluation callback
            InitialField::Hopf(p) => eval_hopf(x, p).unwrap_or([T::zero(); 3]),
        }
    }

    /// Uniform component removed before the simulation and re-added for
    /// output.
    pub fn background(&self) -> Vec3<T> {
        match self {
            InitialField::E3(p) => [T::zero(), T::zero(), p.b0],
            InitialField::Hopf(_) => [T::zero(); 3],
        }
    }

    /// Default half height `Z` of the domain `(-4,4)^2 x (-Z,Z)`.
    pub fn default_half_height(&self) -> T {
        match self {
            InitialField::E3(_) => T::lit(24.0),
            InitialField::Hopf(_) => T::lit(10.0),
        }
    }

    pub fn default_cells(&self) -> [usize; 3] {
        match self {
            InitialField::E3(_) => [4, 4, 24],
            InitialField::Hopf(_) => [4, 4, 10],
        }
    }
}

/// Interpolate `field - background` into H0(div) and remove the discrete
/// divergence by the L2-smallest correction: solve
///
/// ```text
/// [Md  D^T] [dB]   [   0  ]
/// [D    0 ] [p ] = [-D b ]
/// ```
///
/// with one cell row of `D` dropped (the rows sum to zero once boundary
/// fluxes vanish).
pub fn init_divfree_field<T: Real, F>(
    ops: &OperatorSet<T>,
    field: F,
    background: Option<Vec3<T>>,
    q: usize,
) -> Result<FieldCoefficients<T>, FieldsError>
where
    F: Fn(Vec3<T>) -> Vec3<T>,
{
    let bg = background.unwrap_or([T::zero(); 3]);
    let raw = interpolate(
        ops,
        |x| {
            let v = field(x);
            [v[0] - bg[0], v[1] - bg[1], v[2] - bg[2]]
        },
        SpaceKind::Hdiv,
        q,
    )?;
    let mut b = raw.values;
    let nf = ops.hdiv.dim();
    let div = ops.apply_div(&b);
    let nrow = ops.l2.dim().saturating_sub(1);
    if nf > 0 && nrow > 0 && norm_inf(&div) > T::zero() {
        let mut trip: Vec<(usize, usize, T)> = ops.md.triplets();
        for r in 0..nrow {
            for (c, s) in ops.div.row(r) {
                let v = T::lit(f64::from(s));
                trip.push((nf + r, c, v));
                trip.push((c, nf + r, v));
            }
        }
        let k = CsrMatrix::from_triplets(nf + nrow, nf + nrow, trip);
        let mut rhs = vec![T::zero(); nf + nrow];
        for r in 0..nrow {
            rhs[nf + r] = -div[r];
        }
        let sol = DirectSolver::new(k, None, T::lit(1e-12))?.solve(&rhs)?;
        for (bi, d) in b.iter_mut().zip(&sol[..nf]) {
            *bi += *d;
        }
    }
    let divergence = norm_inf(&ops.apply_div(&b));
    let norm = norm2(&b);
    if divergence > T::lit(1e-12) * norm.max(T::min_positive_value()) && divergence > T::zero() {
        return Err(FieldsError::Cleaning { divergence: divergence.to_f64_lossy(), norm: norm.to_f64_lossy() });
    }
    Ok(FieldCoefficients::new(&ops.hdiv, b)?)
}

/// Discretise one of the benchmark fields with its background removed.
pub fn init_field<T: Real>(
    ops: &OperatorSet<T>,
    field: &InitialField<T>,
    q: usize,
) -> Result<FieldCoefficients<T>, FieldsError> {
    field.validate()?;
    let bg = field.background();
    init_divfree_field(ops, |x| field.eval(x), Some(bg), q)
}
