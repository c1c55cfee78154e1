//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Tolerances are fixed here and never loosened to make a line pass.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ifpopt_core::ct_engine::{optimum_for, storage_value, CtSimulation};
use ifpopt_core::defaults::{self, initial_states, reference_objectives, reference_schedule_ct, reference_schedule_dt};
use ifpopt_core::dt_engine::dt_storage_value;
use ifpopt_core::passivity::{beta_supremum, dt_passivity_certificate, ifp_index_ct, ifp_index_dt, max_stepsize};
use ifpopt_core::{
    run_ct, run_dt, AgentState, CtConfig, DtConfig, IndexFormula, ObjectiveSpec, OptimumSolution, RunMetrics,
    TriggerPolicy, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PUBLISHED_DT_INDEX: [f64; 5] = [-1.39, -1.39, -0.44, -0.59, -0.45];
const INDEX_TOL: f64 = 0.005;
const STEPSIZE_BOUND: f64 = 0.5882;
const BOUND_TOL: f64 = 1e-3;
const BETA_SUP_CT: f64 = 0.5;
const BETA_SUP_DT: f64 = 0.3592;
const TIGHT_SAMPLES: usize = 1000;
const DET_TOL: f64 = 1e-9;
const NU_NUDGE: f64 = 1e-3;
const DISSIPATION_SAMPLES: usize = 1000;
const DISSIPATION_SLACK: f64 = 1e-8;
const STATE_RANGE: f64 = 5.0;
const INPUT_RANGE: f64 = 1.0;
const CT_DISSIPATION_HORIZON: f64 = 10.0;
const CT_SHRINK: f64 = 5.0;
const FINAL_ERROR_TOL: f64 = 1e-3;
const CT_LAMBDA_TOL: f64 = 1e-9;
const DT_LAMBDA_TOL: f64 = 1e-12;
const LIMIT_DELTA: f64 = 1e-8;
const LIMIT_REL_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut out = f();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over budget {limit:?}"));
            }
        }
        if !out.pass {
            self.failures += 1;
        }
        println!(
            "{} criterion {id}: {name}: {} ({:.2?})",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed
        );
    }

    fn note(&self, text: &str) {
        println!("     note: {text}");
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn reference_pairs() -> Vec<(f64, f64)> {
    reference_objectives().iter().map(|s| (s.mu, s.lip)).collect()
}

fn index_reproduction() -> Outcome {
    let got: Vec<f64> = reference_pairs()
        .iter()
        .map(|&(mu, l)| ifp_index_dt(defaults::ALPHA, defaults::DELTA, mu, l).unwrap())
        .collect();
    let worst = got
        .iter()
        .zip(PUBLISHED_DT_INDEX)
        .map(|(g, p)| (g - p).abs())
        .fold(0.0, f64::max);
    outcome(worst <= INDEX_TOL, format!("{} max dev {worst:.4}", fmt_list(&got)))
}

fn bound_reproduction() -> Outcome {
    let pairs = reference_pairs();
    let d_max = defaults::reference_schedule_ct().max_in_degrees();
    let delta_min = pairs
        .iter()
        .map(|&(mu, l)| max_stepsize(defaults::ALPHA, mu, l).unwrap())
        .fold(f64::INFINITY, f64::min);
    let nu_ct: Vec<f64> = pairs
        .iter()
        .map(|&(mu, _)| ifp_index_ct(defaults::ALPHA, mu).unwrap().abs())
        .collect();
    let nu_dt: Vec<f64> = pairs
        .iter()
        .map(|&(mu, l)| ifp_index_dt(defaults::ALPHA, defaults::DELTA, mu, l).unwrap().abs())
        .collect();
    let b_ct = beta_supremum(&nu_ct, &d_max);
    let b_dt = beta_supremum(&nu_dt, &d_max);
    let pass = (delta_min - STEPSIZE_BOUND).abs() <= BOUND_TOL
        && b_ct == BETA_SUP_CT
        && (b_dt - BETA_SUP_DT).abs() <= BOUND_TOL;
    outcome(
        pass,
        format!("delta bound {delta_min:.6}, beta sup ct {b_ct}, dt {b_dt:.6}"),
    )
}

fn certificate_tightness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_det = 0.0_f64;
    let mut failures = 0;
    for _ in 0..TIGHT_SAMPLES {
        let alpha = rng.gen_range(0.5..2.0);
        let mu = rng.gen_range(0.5..2.0);
        let l = mu * rng.gen_range(1.0..4.0);
        let delta = (rng.gen_range(0.0..0.9) * max_stepsize(alpha, mu, l).unwrap()).max(1e-6);
        let nu = ifp_index_dt(alpha, delta, mu, l).unwrap();
        let at = dt_passivity_certificate(alpha, delta, mu, l, nu);
        let above = dt_passivity_certificate(alpha, delta, mu, l, nu + NU_NUDGE);
        worst_det = worst_det.max(at.det.abs());
        if !(at.det.abs() <= DET_TOL && at.negative_semidefinite && !above.negative_semidefinite) {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("{TIGHT_SAMPLES} samples, max |det| {worst_det:.2e}, {failures} failures"),
    )
}

/// Largest violation of the one-step inequality for one agent, over random
/// states and inputs, with `nu` supplying the index.
fn dt_dissipation_excess(spec: &ObjectiveSpec, opt: &OptimumSolution, nu: f64, seed: u64) -> f64 {
    let (alpha, delta) = (defaults::ALPHA, defaults::DELTA);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..DISSIPATION_SAMPLES {
        let x = Vector::from_element(1, rng.gen_range(-STATE_RANGE..STATE_RANGE));
        let lambda = Vector::from_element(1, rng.gen_range(-STATE_RANGE..STATE_RANGE));
        let u = Vector::from_element(1, rng.gen_range(-INPUT_RANGE..INPUT_RANGE));
        let s = AgentState { x, lambda };
        let z = spec.gradient(&s.x).unwrap() * alpha + &s.lambda;
        let next = AgentState {
            x: &s.x - &z * delta,
            lambda: &s.lambda - &u * delta,
        };
        let dv = dt_storage_value(&next, spec, alpha, delta, opt).unwrap()
            - dt_storage_value(&s, spec, alpha, delta, opt).unwrap();
        let supply = (&s.x - &opt.x_star).dot(&u) + nu.abs() * u.norm_squared();
        worst = worst.max(dv - supply);
    }
    worst
}

fn dt_dissipation(formula: IndexFormula) -> (Outcome, Vec<f64>) {
    let specs = reference_objectives();
    let opt = optimum_for(&specs, defaults::ALPHA, 1).unwrap();
    let excess: Vec<f64> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let nu = formula.dt_index(defaults::ALPHA, defaults::DELTA, s.mu, s.lip).unwrap();
            dt_dissipation_excess(s, &opt, nu, 200 + i as u64)
        })
        .collect();
    let bad: Vec<usize> = (0..5)
        .filter(|&i| excess[i] > DISSIPATION_SLACK)
        .map(|i| i + 1)
        .collect();
    let detail = format!(
        "{DISSIPATION_SAMPLES} samples/agent, max excess per agent {}, agents over slack {bad:?}",
        fmt_list(&excess)
    );
    (outcome(bad.is_empty(), detail), excess)
}

/// Largest positive excess of the finite-difference storage rate over the
/// supply rate along the reference trajectory at step `h`.
fn ct_dissipation_excess(h: f64) -> f64 {
    let specs = reference_objectives();
    let opt = optimum_for(&specs, defaults::ALPHA, 1).unwrap();
    let mut cfg = CtConfig::new(defaults::ALPHA, defaults::BETA_CT, initial_states(5, 1, defaults::SEED));
    cfg.h = h;
    cfg.t_final = CT_DISSIPATION_HORIZON;
    cfg.record_every = u64::MAX;
    let policy = TriggerPolicy::exact(5, defaults::C).unwrap();
    let mut sim = CtSimulation::new(cfg, &specs, &reference_schedule_ct(), &policy, opt.clone()).unwrap();
    let nu = sim.nu_magnitudes().to_vec();
    let mut worst = 0.0_f64;
    while !sim.is_done() {
        let before = sim.states().to_vec();
        let report = sim.step().unwrap();
        for (i, spec) in specs.iter().enumerate() {
            let after = &sim.states()[i];
            let rate = (storage_value(after, spec, defaults::ALPHA, &opt).unwrap()
                - storage_value(&before[i], spec, defaults::ALPHA, &opt).unwrap())
                / h;
            let u = &report.inputs[i];
            let supply = (&before[i].x - &opt.x_star).dot(u) + nu[i] * u.norm_squared();
            worst = worst.max(rate - supply);
        }
    }
    worst
}

fn ct_dissipation() -> Outcome {
    let coarse = ct_dissipation_excess(1e-3);
    let fine = ct_dissipation_excess(1e-4);
    let pass = coarse <= 1e-3 && fine * CT_SHRINK <= coarse;
    outcome(pass, format!("max excess h=1e-3: {coarse:.3e}, h=1e-4: {fine:.3e}"))
}

fn ct_reference_run() -> RunMetrics {
    let mut cfg = CtConfig::new(defaults::ALPHA, defaults::BETA_CT, initial_states(5, 1, defaults::SEED));
    cfg.record_every = 1000;
    let policy = TriggerPolicy::exact(5, defaults::C).unwrap();
    run_ct(cfg, &reference_objectives(), &reference_schedule_ct(), &policy)
        .unwrap()
        .metrics
}

fn dt_reference_run(beta: f64) -> RunMetrics {
    let cfg = DtConfig::new(
        defaults::ALPHA,
        beta,
        defaults::DELTA,
        initial_states(5, 1, defaults::SEED),
    );
    let policy = TriggerPolicy::exact(5, defaults::C).unwrap();
    run_dt(cfg, &reference_objectives(), &reference_schedule_dt(), &policy)
        .unwrap()
        .metrics
}

fn limit_consistency(formula: IndexFormula) -> (bool, Vec<f64>) {
    let rel: Vec<f64> = reference_pairs()
        .iter()
        .map(|&(mu, l)| {
            let ct = ifp_index_ct(defaults::ALPHA, mu).unwrap();
            let dt = formula.dt_index(defaults::ALPHA, LIMIT_DELTA, mu, l).unwrap();
            ((dt - ct) / ct).abs()
        })
        .collect();
    (rel.iter().all(|&r| r <= LIMIT_REL_TOL), rel)
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };

    suite.check(1, "discrete-time index reproduction", None, index_reproduction);
    suite.check(2, "stepsize and gain bounds", None, bound_reproduction);
    suite.check(
        3,
        "certificate tightness",
        Some(Duration::from_secs(1)),
        certificate_tightness,
    );

    let mut worst_case_excess = Vec::new();
    suite.check(
        4,
        "discrete-time dissipation (default index)",
        Some(Duration::from_secs(1)),
        || dt_dissipation(IndexFormula::Printed).0,
    );
    let (wc, ex) = dt_dissipation(IndexFormula::WorstCase);
    worst_case_excess.extend(ex);
    suite.note(&format!(
        "curvature-worst-case index: {} with max excess {}",
        if wc.pass { "holds" } else { "fails" },
        fmt_list(&worst_case_excess)
    ));

    suite.check(
        5,
        "continuous-time dissipation",
        Some(Duration::from_secs(30)),
        ct_dissipation,
    );

    let mut ct_metrics = None;
    suite.check(6, "continuous-time convergence", Some(Duration::from_secs(10)), || {
        let m = ct_reference_run();
        let pass = m.final_error <= FINAL_ERROR_TOL
            && m.lyapunov_violations == 0
            && m.lyapunov_tol == 1e-8
            && m.lambda_sum_drift <= CT_LAMBDA_TOL;
        let out = outcome(
            pass,
            format!(
                "final error {:.3e}, lyapunov violations {}, lambda drift {:.1e}, triggers {}",
                m.final_error, m.lyapunov_violations, m.lambda_sum_drift, m.total_triggers
            ),
        );
        ct_metrics = Some(m);
        out
    });

    let mut dt_metrics = Vec::new();
    suite.check(7, "discrete-time convergence and trigger trade-off", Some(Duration::from_secs(5)), || {
        let low = dt_reference_run(0.1);
        let high = dt_reference_run(0.3);
        let pass = low.final_error <= FINAL_ERROR_TOL
            && high.final_error <= FINAL_ERROR_TOL
            && low.comm_ratio < 1.0
            && high.comm_ratio < 1.0
            && high.total_triggers > low.total_triggers;
        let out = outcome(
            pass,
            format!(
                "beta 0.1: error {:.2e}, triggers {}, ratio {:.3}; beta 0.3: error {:.2e}, triggers {}, ratio {:.3}",
                low.final_error, low.total_triggers, low.comm_ratio, high.final_error, high.total_triggers, high.comm_ratio
            ),
        );
        dt_metrics = vec![low, high];
        out
    });

    suite.check(8, "conservation and graph assumptions", None, || {
        let schedule = reference_schedule_ct();
        let balanced = schedule.modes().iter().all(|g| g.is_weight_balanced());
        let window = schedule.check_ujsc();
        let ct_drift = ct_metrics.as_ref().map_or(f64::NAN, |m| m.lambda_sum_drift);
        let dt_drift = dt_metrics.iter().map(|m| m.lambda_sum_drift).fold(0.0, f64::max);
        let pass = balanced
            && matches!(window, Ok(1))
            && ct_drift <= CT_LAMBDA_TOL
            && dt_metrics.len() == 2
            && dt_drift <= DT_LAMBDA_TOL;
        outcome(
            pass,
            format!("balanced {balanced}, joint window {window:?}, lambda drift ct {ct_drift:.1e}, dt {dt_drift:.1e}"),
        )
    });

    suite.check(9, "small-stepsize limit of the default index", None, || {
        let (pass, rel) = limit_consistency(IndexFormula::Printed);
        outcome(pass, format!("relative deviation at delta=1e-8 {}", fmt_list(&rel)))
    });
    let (wc_pass, wc_rel) = limit_consistency(IndexFormula::WorstCase);
    suite.note(&format!(
        "curvature-worst-case index limit: {} with relative deviation {}",
        if wc_pass { "holds" } else { "fails" },
        fmt_list(&wc_rel)
    ));
    println!("{} of 9 criteria failed", suite.failures);
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
