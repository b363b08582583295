//! Arbitrary high order ADER and deferred correction (DeC) time integration.
//!
//! The crate provides explicit and stiff (IMDeC/IMADER) one-step methods built
//! on subnode collocation over a reference slab, an amplification-factor
//! scanner, a 1D spectral difference discretization driven by the same time
//! integrators, and the error-norm/convergence tooling used by the CLI.
//!
//! All numerical code is generic over [`Real`] (`f32`, `f64`); the `*64`
//! aliases below fix the scalar for the common case.

// `!(x > 0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod explicit;
pub mod harness;
pub mod implicit;
pub mod linalg;
pub mod nodes;
pub mod ode;
pub mod scalar;
pub mod sd1d;
pub mod stability;

pub use error::{Error, Result};
pub use explicit::{
    integrate, EndpointUpdate, ExplicitStepper, Method, OneStepMethod, Schedule, SlabCoefficients,
    StepperConfig, TimeScheme,
};
pub use harness::{discrete_l2_error, ConvergenceRow, OdeProblemId, PdeProblem};
pub use implicit::{ImplicitConfig, ImplicitMethod, ImplicitStepper};
pub use linalg::{DenseMatrix, LuFactors};
pub use nodes::{NodeFamily, NodeSet, ThetaTable};
pub use ode::{OdeSystem, Trajectory};
pub use scalar::Real;
pub use sd1d::{cfl_timestep, Boundary, Flux, SdGrid, SdState};
pub use stability::{amplification, amplification_factor, GridBounds, StabilityGrid, StabilitySummary};

pub type NodeSet64 = NodeSet<f64>;
pub type ThetaTable64 = ThetaTable<f64>;
pub type DenseMatrix64 = DenseMatrix<f64>;
pub type OdeSystem64 = OdeSystem<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type TimeScheme64 = TimeScheme<f64>;
pub type ExplicitStepper64 = ExplicitStepper<f64>;
pub type ImplicitStepper64 = ImplicitStepper<f64>;
pub type Schedule64 = Schedule<f64>;
pub type SdGrid64 = SdGrid<f64>;
pub type StabilityGrid64 = StabilityGrid<f64>;
