//! Safety-critical control of tractor-trailer robots: a linear time-varying
//! MPC tracker whose output is rectified by a quadratic-program safety filter
//! built from multiple high-relative-degree control barrier functions, plus a
//! closed-loop simulator and its file formats.
//!
//! Module map:
//! - [`types`]: states, inputs, limits, geometry, obstacles, trajectory log
//! - [`dynamics`]: kinematic models, trailer pose, footprints, RK4
//! - [`linmodel`]: discrete LTV linearization and its finite-difference oracle
//! - [`qp`]: dense convex QP/LP solver with KKT certification
//! - [`mpc`]: condensed LTV MPC tracking controller
//! - [`safety`]: barrier derivatives, cascades, constraint assembly, filters
//! - [`reference`], [`sim`]: reference generation and closed-loop runs
//! - [`scenario`], [`logio`], [`plot`]: TOML scenarios, CSV/JSON output, SVG plots
//! - [`verify`]: the numerical oracle suite

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod dynamics;
pub mod linmodel;
pub mod logio;
pub mod mpc;
pub mod plot;
pub mod qp;
pub mod reference;
pub mod safety;
pub mod scenario;
pub mod sim;
pub mod types;
pub mod verify;

pub use types::{
    InputVector, Limits, LogEntry, Obstacle, RobotGeometry, RobotKind, SsttrInput, SsttrState,
    StateVector, TrajectoryLog,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("steering angle {0} rad is at or beyond the +/- pi/2 singularity")]
    SteeringSingularity(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cost matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("safety filter QP is infeasible: {0}")]
    FilterInfeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("log format error: {0}")]
    LogFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
