//! The five-agent reference problem.
//!
//! Objectives (scalar decision variable):
//!
//! | agent | f_i(x)                          | mu  | l    |
//! |-------|---------------------------------|-----|------|
//! | 1     | x^2/2 + 3x + 1                  | 1   | 1    |
//! | 2     | x^2/2 - x                       | 1   | 1    |
//! | 3     | x^2 + sin x                     | 1   | 3    |
//! | 4     | ln(e^{2x} + 1) + x^2/2          | 1   | 2    |
//! | 5     | ln(e^{2x} + e^{-0.2x}) + 0.6x^2 | 1.2 | 2.41 |
//!
//! The network alternates between two unit-weight directed 5-cycles,
//! `1->2->3->4->5->1` and `1->3->5->2->4->1`. Each is weight-balanced with
//! unit in-degree. The original figure's topologies are not known; these
//! modes reproduce its stated gain bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{GraphSchedule, WeightedDigraph};
use crate::objective::{ObjectiveKind, ObjectiveSpec};
use crate::Vector;

pub const AGENTS: usize = 5;
pub const ALPHA: f64 = 1.0;
pub const C: f64 = 0.99;
pub const BETA_CT: f64 = 0.2;
pub const DELTA: f64 = 0.1;
/// Seconds between switches.
pub const DWELL_SECONDS: f64 = 2.0;
pub const STEP_CT: f64 = 1e-3;
pub const T_FINAL: f64 = 60.0;
pub const K_FINAL: u64 = 2000;
pub const SEED: u64 = 7;
pub const OPTIMUM_TOL: f64 = 1e-10;

pub fn reference_objectives() -> Vec<ObjectiveSpec> {
    let kinds = [
        ObjectiveKind::Quadratic { a: 1.0, b: 3.0, c: 1.0 },
        ObjectiveKind::Quadratic {
            a: 1.0,
            b: -1.0,
            c: 0.0,
        },
        ObjectiveKind::SinQuad,
        ObjectiveKind::LogExp1,
        ObjectiveKind::LogExp2,
    ];
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, k)| ObjectiveSpec::catalog(i, k).expect("catalog entries are certified"))
        .collect()
}

pub fn reference_modes() -> Vec<WeightedDigraph> {
    vec![
        WeightedDigraph::cycle(AGENTS, &[0, 1, 2, 3, 4]).expect("valid cycle"),
        WeightedDigraph::cycle(AGENTS, &[0, 2, 4, 1, 3]).expect("valid cycle"),
    ]
}

/// Continuous-time schedule, dwell in seconds.
pub fn reference_schedule_ct() -> GraphSchedule {
    GraphSchedule::uniform(reference_modes(), DWELL_SECONDS).expect("valid schedule")
}

/// Discrete-time schedule, dwell in steps of the reference stepsize
/// (two seconds at `delta = 0.1`).
pub fn reference_schedule_dt() -> GraphSchedule {
    GraphSchedule::uniform(reference_modes(), dwell_steps(DELTA)).expect("valid schedule")
}

/// Number of steps covering [`DWELL_SECONDS`] at stepsize `delta`, at least one.
pub fn dwell_steps(delta: f64) -> f64 {
    (DWELL_SECONDS / delta).round().max(1.0)
}

/// Initial decision vectors drawn uniformly from `[0, 1]^m`.
pub fn initial_states(n: usize, m: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector::from_fn(m, |_, _| rng.gen_range(0.0..=1.0)))
        .collect()
}
