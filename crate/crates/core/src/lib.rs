//! Periodic operating modes and stability certificates for PWM DC-DC buck
//! converters under voltage-mode control with natural-sampling trailing-edge
//! modulation.
//!
//! The pipeline is:
//!
//! 1. [`model`] assembles the closed-loop linear part `dx/dt = Ax + Bf + q`,
//!    `sigma = Cx + psi` and shifts it so that `q = 0`.
//! 2. [`periodic`] finds unsaturated T-periodic modes from the exact
//!    pulse response and bounds the slope of the control signal along them.
//! 3. [`lmi`] builds the existence and global-stability matrix inequalities,
//!    solves them with an embedded max-margin solver and re-verifies every
//!    certificate by eigenvalues.
//! 4. [`simulator`] runs the hybrid closed loop event-exactly and checks the
//!    averaging bounds and sector condition the stability argument relies on.
//!
//! Every numerical type is generic over [`Scalar`]; the aliases at the crate
//! root fix it to `f64`, which is what the tolerances are calibrated for.

pub mod error;
pub mod lmi;
pub mod model;
pub mod numerics;
pub mod periodic;
pub mod scalar;
pub mod simulator;
pub mod tolerances;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tolerances::Tolerances;

pub type Matrix = numerics::Matrix<f64>;
pub type SymEig = numerics::SymEig<f64>;
pub type PowerStageParams = model::PowerStageParams<f64>;
pub type StateSpaceBlock = model::StateSpaceBlock<f64>;
pub type ControlConfig = model::ControlConfig<f64>;
pub type LtiSystem = model::LtiSystem<f64>;
pub type RampParams = model::RampParams<f64>;
pub type PeriodicMode = periodic::PeriodicMode<f64>;
pub type ExistenceReport = periodic::ExistenceReport<f64>;
pub type LmiProblem = lmi::LmiProblem<f64>;
pub type LmiCertificate = lmi::LmiCertificate<f64>;
pub type SimTrace = simulator::SimTrace<f64>;
pub type SimConfig = simulator::SimConfig<f64>;
pub type Diagnostics = simulator::Diagnostics<f64>;
pub type Theorem1Sweep = lmi::Theorem1Sweep<f64>;
pub type Theorem2Result = lmi::Theorem2Result<f64>;
pub type L1Table = periodic::L1Table<f64>;
