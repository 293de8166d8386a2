//! Lowest-order finite element sequence H1 -> H(curl) -> H(div) -> L2 on
//! structured hexahedral meshes.
//!
//! Degrees of freedom are vertex values, edge line integrals, face fluxes
//! and cell values. With these, the discrete gradient, curl and divergence
//! are the signed incidence matrices of the mesh.

mod assembly;
pub mod element;
mod interpolate;
pub mod quadrature;
mod space;

pub use assembly::{OperatorSet, MASS_POINTS, NONLINEAR_POINTS};
pub use interpolate::{edge_integrals, face_fluxes, interpolate, DEFAULT_INTERPOLATION_POINTS};
pub use space::{FieldCoefficients, Space, SpaceKind};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeecError {
    #[error("{kind} coefficient vector has length {got}, expected {expected}")]
    Length { kind: SpaceKind, expected: usize, got: usize },
    #[error("expected a field in {expected}, got {got}")]
    SpaceMismatch { expected: SpaceKind, got: SpaceKind },
    #[error("interpolation into {kind} is not supported")]
    Unsupported { kind: SpaceKind },
    #[error("field evaluates to a non-finite value at {point:?}")]
    NonFinite { point: [f64; 3] },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
