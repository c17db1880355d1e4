//! Receding-horizon control over the switched linear predictor: Riccati
//! terminal weights, condensed box-constrained QPs, a projected-gradient
//! solver, and the closed-loop harness.

mod condense;
mod config;
mod controller;
mod dare;
mod runlog;
mod solver;

pub use condense::{
    build_horizon_problem, terminal_weights, HorizonDynamics, HorizonProblem, PredictionMatrices,
    StateLimits,
};
pub use config::{InputBounds, MpcConfig, PredictionSpace, SolverSettings};
pub use controller::{closed_loop_run, MpcController, MpcStep, RunLog, RunRow};
pub use dare::{lqr_gain, solve_dare, DareOptions};
pub use runlog::{RunSummary, RUN_CSV_HEADER};
pub use solver::{predicted_states, solve_horizon, MpcSolution};
