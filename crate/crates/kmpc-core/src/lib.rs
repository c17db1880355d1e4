//! Data-driven control toolkit for FES-assisted ankle gait.
//!
//! Identifies phase-indexed linear predictors of a switched nonlinear
//! ankle plant from simulated trajectories and uses them inside a
//! constrained receding-horizon controller that tracks gait references.
//!
//! - [`plant`]: switched musculoskeletal dynamics, reference generation,
//!   and training-data synthesis.
//! - [`koopman`]: observable dictionaries, least-squares operator fits,
//!   and switched linear prediction with accuracy reports.
//! - [`mpc`]: Riccati terminal weights, condensed quadratic programs, and
//!   the projected-gradient receding-horizon controller.
//! - [`cli`]: the experiment pipeline behind the `kmpc` binary.

pub mod cli;
pub mod error;
pub mod koopman;
pub mod mpc;
pub mod plant;

pub use error::{Error, Result};
