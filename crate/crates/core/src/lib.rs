//! Distributed optimization over switching weight-balanced digraphs, driven
//! by input feedforward passivity (IFP).
//!
//! Each agent runs the primal-dual dynamics
//!
//! ```text
//! x_i' = -alpha * grad f_i(x_i) - lambda_i
//! lambda_i' = -u_i,   u_i = beta * sum_j a_ij (xhat_j - xhat_i)
//! ```
//!
//! where `xhat_j` is the last state agent `j` broadcast. Broadcasts are
//! event-triggered: an agent transmits only when its local sampling error
//! crosses a threshold built from its IFP index.
//!
//! The crate is split along the lines of the design calculus:
//!
//! - [`objective`]: local objectives, moduli, averaged Hessians, and the
//!   centralized optimum oracle.
//! - [`graph`]: weighted digraphs, balance and joint connectivity checks,
//!   periodic switching schedules.
//! - [`passivity`]: IFP indices, stepsize and gain bounds, 2x2 certificates.
//! - [`trigger`]: triggering thresholds and broadcast bookkeeping.
//! - [`ct_engine`] / [`dt_engine`]: continuous-time (RK4) and forward-Euler
//!   simulators with storage-function tracking.
//! - [`trace`]: recorded samples, run metrics, and CSV/JSON writers.
//! - [`defaults`]: the five-agent reference scenario.

// `!(x > 0.0)` forms reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ct_engine;
pub mod defaults;
pub mod dt_engine;
pub mod graph;
pub mod objective;
pub mod passivity;
mod quadrature;
pub mod trace;
pub mod trigger;

pub use ct_engine::{run_ct, AgentState, CtConfig, CtSimulation};
pub use dt_engine::{dt_step, run_dt, DtConfig, DtSimulation};
pub use graph::{GraphSchedule, WeightedDigraph};
pub use objective::{solve_centralized_optimum, ObjectiveKind, ObjectiveSpec, OptimumSolution};
pub use passivity::{IndexFormula, NetworkCertificate, PassivityCertificate};
pub use trace::{RunMetrics, SimulationTrace, TraceKind};
pub use trigger::{CommState, Threshold, TriggerMode, TriggerPolicy};

/// Decision vectors, auxiliary states and inputs.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrices (Hessians, adjacency, Laplacians).
pub type Matrix = nalgebra::DMatrix<f64>;

/// Errors from the simulation engines.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state diverged (non-finite) at step {step}, t = {time}")]
    Divergence { step: u64, time: f64 },
    #[error(transparent)]
    Objective(#[from] objective::ObjectiveError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Passivity(#[from] passivity::PassivityError),
    #[error(transparent)]
    Trigger(#[from] trigger::TriggerError),
}
