//! Structure-preserving finite element magneto-frictional relaxation.
//!
//! Lowest-order de Rham complex on structured hexahedral meshes, three
//! time integrators (non-conservative Crank-Nicolson, helicity-preserving
//! projection, Lagrange multiplier) and energy/helicity diagnostics.
//!
//! The numerical core is generic over [`scalar::Real`]; the aliases below
//! fix it to `f64`.

// Index loops mirror the element formulas; `!(a >= b)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

use thiserror::Error;

pub mod config;
pub mod diagnostics;
pub mod feec;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod run;
pub mod scalar;
pub mod schemes;

pub use config::{parse_config, ConfigError};
pub use run::{run_simulation, RunOutcome};
pub use schemes::SchemeKind;

pub type Mesh = mesh::StructuredHexMesh<f64>;
pub type Domain = mesh::CuboidDomain<f64>;
pub type Operators = feec::OperatorSet<f64>;
pub type Field = feec::FieldCoefficients<f64>;
pub type State = schemes::SchemeState<f64>;
pub type Config = config::RunConfig<f64>;
pub type Record = diagnostics::DiagnosticsRecord<f64>;
pub type Phase = schemes::TimePhase<f64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Feec(#[from] feec::FeecError),
    #[error(transparent)]
    Fields(#[from] fields::FieldsError),
    #[error(transparent)]
    Diagnostics(#[from] diagnostics::DiagnosticsError),
    #[error(transparent)]
    Scheme(#[from] schemes::SchemeError),
    #[error("step {step} (phase {phase}): {source}")]
    Step {
        step: usize,
        phase: usize,
        #[source]
        source: schemes::SchemeError,
    },
    #[error(transparent)]
    Output(#[from] output::OutputError),
}
