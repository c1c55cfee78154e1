//! Fixtures shared by the benchmarks.

use ifpopt_core::defaults::{self, initial_states, reference_objectives, reference_schedule_ct, reference_schedule_dt};
use ifpopt_core::graph::WeightedDigraph;
use ifpopt_core::{CtConfig, DtConfig, GraphSchedule, ObjectiveSpec, TriggerPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Reference {
    pub specs: Vec<ObjectiveSpec>,
    pub ct_schedule: GraphSchedule,
    pub dt_schedule: GraphSchedule,
    pub policy: TriggerPolicy,
}

pub fn reference() -> Reference {
    Reference {
        specs: reference_objectives(),
        ct_schedule: reference_schedule_ct(),
        dt_schedule: reference_schedule_dt(),
        policy: TriggerPolicy::exact(defaults::AGENTS, defaults::C).expect("valid constant"),
    }
}

/// Continuous-time config over `t_final` seconds, recording only endpoints.
pub fn ct_config(t_final: f64) -> CtConfig {
    let mut cfg = CtConfig::new(
        defaults::ALPHA,
        defaults::BETA_CT,
        initial_states(defaults::AGENTS, 1, defaults::SEED),
    );
    cfg.t_final = t_final;
    cfg.record_every = u64::MAX;
    cfg
}

pub fn dt_config(beta: f64, k_final: u64) -> DtConfig {
    let mut cfg = DtConfig::new(
        defaults::ALPHA,
        beta,
        defaults::DELTA,
        initial_states(defaults::AGENTS, 1, defaults::SEED),
    );
    cfg.k_final = k_final;
    cfg
}

/// Sparse random digraph with about `degree` out-edges per node.
pub fn random_digraph(n: usize, degree: usize, seed: u64) -> WeightedDigraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(n * degree);
    for from in 0..n {
        for _ in 0..degree {
            let to = rng.gen_range(0..n);
            if to != from {
                edges.push((from, to, 1.0));
            }
        }
    }
    edges.sort_by_key(|&(f, t, _)| (f, t));
    edges.dedup_by_key(|e| (e.0, e.1));
    WeightedDigraph::from_edges(n, &edges).expect("valid edges")
}
