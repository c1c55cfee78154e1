//! Forward-Euler discrete-time algorithm with event-triggered input.
//!
//! Each step reads the graph at `k`, evaluates every agent's trigger on the
//! pre-update state, commits all broadcasts at once, forms the input from the
//! committed broadcasts, and then applies one Euler step.

use crate::ct_engine::{check_initial, coupling_inputs, optimum_for, storage_with_rate, AgentState};
use crate::graph::{GraphSchedule, WeightedDigraph};
use crate::objective::{ObjectiveError, ObjectiveSpec, OptimumSolution};
use crate::passivity::{IndexFormula, NetworkCertificate};
use crate::trace::{AgentSample, RunMonitor, SimulationTrace, TraceKind, TraceRecord};
use crate::trigger::{neighbor_gap, should_trigger, Threshold, TriggerPolicy};
use crate::{defaults, EngineError, Vector};

/// Default tolerance on one-step storage growth.
pub const LYAPUNOV_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub k_final: u64,
    pub x0: Vec<Vector>,
    /// All-zero when `None`.
    pub lambda0: Option<Vec<Vector>>,
    pub index_formula: IndexFormula,
    pub record_every: u64,
    pub lyapunov_tol: f64,
    /// Skip the stepsize and gain conditions.
    pub force: bool,
}

impl DtConfig {
    pub fn new(alpha: f64, beta: f64, delta: f64, x0: Vec<Vector>) -> Self {
        DtConfig {
            alpha,
            beta,
            delta,
            k_final: defaults::K_FINAL,
            x0,
            lambda0: None,
            index_formula: IndexFormula::Printed,
            record_every: 1,
            lyapunov_tol: LYAPUNOV_TOL,
            force: false,
        }
    }

    pub fn initial_states(&self) -> Vec<AgentState> {
        match &self.lambda0 {
            Some(l0) => self
                .x0
                .iter()
                .zip(l0)
                .map(|(x, l)| AgentState {
                    x: x.clone(),
                    lambda: l.clone(),
                })
                .collect(),
            None => self.x0.iter().cloned().map(AgentState::new).collect(),
        }
    }

    /// Checks everything except the stepsize and gain conditions.
    pub fn validate_shape(&self, specs: &[ObjectiveSpec], schedule: &GraphSchedule) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        check_initial(&self.x0, self.lambda0.as_deref(), specs, schedule)
    }

    /// Certificate for this configuration against the schedule's degree bounds.
    pub fn certify(
        &self,
        specs: &[ObjectiveSpec],
        schedule: &GraphSchedule,
    ) -> Result<NetworkCertificate, EngineError> {
        Ok(NetworkCertificate::certify(
            specs,
            &schedule.max_in_degrees(),
            self.alpha,
            Some(self.delta),
            self.index_formula,
        )?)
    }
}

/// Result of one step.
#[derive(Clone, Debug)]
pub struct DtStep {
    pub states: Vec<AgentState>,
    pub xhat: Vec<Vector>,
    pub triggered: Vec<bool>,
    pub eligible: Vec<bool>,
    /// `alpha grad f_i(x_i(k)) + lambda_i(k)`.
    pub z: Vec<Vector>,
    /// Inputs formed from the committed broadcasts.
    pub inputs: Vec<Vector>,
    pub sampling_errors: Vec<f64>,
    pub thresholds: Vec<Threshold>,
}

/// One step of the algorithm at step index `k`.
///
/// `nu_mag` holds `|nu_i|` for the trigger thresholds.
#[allow(clippy::too_many_arguments)]
pub fn dt_step(
    k: u64,
    states: &[AgentState],
    xhat: &[Vector],
    g: &WeightedDigraph,
    specs: &[ObjectiveSpec],
    config: &DtConfig,
    policy: &TriggerPolicy,
    nu_mag: &[f64],
) -> Result<DtStep, EngineError> {
    let n = states.len();
    let diverged = || EngineError::Divergence {
        step: k + 1,
        time: (k + 1) as f64 * config.delta,
    };

    let mut triggered = vec![false; n];
    let mut eligible = vec![false; n];
    let mut errors = vec![0.0; n];
    let mut thresholds = vec![Threshold::Never; n];
    for i in 0..n {
        let d_in = g.in_degree(i);
        eligible[i] = d_in > 0.0;
        errors[i] = (&states[i].x - &xhat[i]).norm_squared();
        let gap = neighbor_gap(g, xhat, i);
        thresholds[i] = policy.threshold(i, nu_mag[i], config.beta, d_in, gap);
        triggered[i] = eligible[i] && should_trigger(errors[i], thresholds[i], policy);
    }
    let mut xhat_next = xhat.to_vec();
    for i in 0..n {
        if triggered[i] {
            xhat_next[i].copy_from(&states[i].x);
        }
    }
    let inputs = coupling_inputs(&xhat_next, g, config.beta);

    let mut next = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for ((s, u), spec) in states.iter().zip(&inputs).zip(specs) {
        let grad = spec.gradient(&s.x).map_err(|_| diverged())?;
        let zi = grad * config.alpha + &s.lambda;
        let state = AgentState {
            x: &s.x - &zi * config.delta,
            lambda: &s.lambda - u * config.delta,
        };
        if !state.is_finite() {
            return Err(diverged());
        }
        next.push(state);
        z.push(zi);
    }
    Ok(DtStep {
        states: next,
        xhat: xhat_next,
        triggered,
        eligible,
        z,
        inputs,
        sampling_errors: errors,
        thresholds,
    })
}

/// `z_i = alpha grad f_i(x_i) + lambda_i`.
pub fn z_value(state: &AgentState, spec: &ObjectiveSpec, alpha: f64) -> Result<Vector, ObjectiveError> {
    Ok(spec.gradient(&state.x)? * alpha + &state.lambda)
}

/// Agent storage `V_i / delta`, with `z_i` as the rate term.
pub fn dt_storage_value(
    state: &AgentState,
    spec: &ObjectiveSpec,
    alpha: f64,
    delta: f64,
    opt: &OptimumSolution,
) -> Result<f64, ObjectiveError> {
    let z = z_value(state, spec, alpha)?;
    Ok(storage_with_rate(&z, state, spec, alpha, opt)? / delta)
}

pub fn dt_storage_total(
    states: &[AgentState],
    specs: &[ObjectiveSpec],
    alpha: f64,
    delta: f64,
    opt: &OptimumSolution,
) -> Result<f64, ObjectiveError> {
    states
        .iter()
        .zip(specs)
        .map(|(s, spec)| dt_storage_value(s, spec, alpha, delta, opt))
        .sum()
}

/// Steppable discrete-time run.
#[derive(Clone, Debug)]
pub struct DtSimulation {
    config: DtConfig,
    specs: Vec<ObjectiveSpec>,
    schedule: GraphSchedule,
    policy: TriggerPolicy,
    nu: Vec<f64>,
    opt: OptimumSolution,
    states: Vec<AgentState>,
    xhat: Vec<Vector>,
    k: u64,
    monitor: RunMonitor,
    records: Vec<TraceRecord>,
    last_triggered: Vec<bool>,
}

impl DtSimulation {
    pub fn new(
        config: DtConfig,
        specs: &[ObjectiveSpec],
        schedule: &GraphSchedule,
        policy: &TriggerPolicy,
        opt: OptimumSolution,
    ) -> Result<Self, EngineError> {
        config.validate_shape(specs, schedule)?;
        if policy.c.len() != specs.len() {
            return Err(EngineError::Config(format!(
                "{} trigger constants for {} agents",
                policy.c.len(),
                specs.len()
            )));
        }
        let cert = config.certify(specs, schedule)?;
        if !config.force {
            let violations = cert.check_dt(config.beta);
            if !violations.is_empty() {
                let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(EngineError::Config(msg.join("; ")));
            }
        }
        // a forced run past the stepsize bound falls back to the continuous-time index
        let nu = match cert.nu_dt_magnitudes() {
            Some(nu) => nu,
            None => cert.nu_ct_magnitudes(),
        };
        let states = config.initial_states();
        let lambda0: Vec<Vector> = states.iter().map(|s| s.lambda.clone()).collect();
        let storage0 = dt_storage_total(&states, specs, config.alpha, config.delta, &opt)?;
        let monitor = RunMonitor::new(specs.len(), &lambda0, storage0, config.lyapunov_tol);
        let xhat = states.iter().map(|s| s.x.clone()).collect();
        let n = specs.len();
        Ok(DtSimulation {
            config,
            specs: specs.to_vec(),
            schedule: schedule.clone(),
            policy: policy.clone(),
            nu,
            opt,
            states,
            xhat,
            k: 0,
            monitor,
            records: Vec::new(),
            last_triggered: vec![false; n],
        })
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn xhat(&self) -> &[Vector] {
        &self.xhat
    }

    pub fn optimum(&self) -> &OptimumSolution {
        &self.opt
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn nu_magnitudes(&self) -> &[f64] {
        &self.nu
    }

    pub fn storage_total(&self) -> Result<f64, ObjectiveError> {
        dt_storage_total(
            &self.states,
            &self.specs,
            self.config.alpha,
            self.config.delta,
            &self.opt,
        )
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.config.k_final
    }

    /// Advances from `k` to `k + 1`. The record for step `k` carries the
    /// broadcasts committed at `k` and `z(k)`.
    pub fn step(&mut self) -> Result<DtStep, EngineError> {
        let g = self.schedule.graph_at_step(self.k);
        let out = dt_step(
            self.k,
            &self.states,
            &self.xhat,
            g,
            &self.specs,
            &self.config,
            &self.policy,
            &self.nu,
        )?;
        let storage = self.storage_total().map_err(|_| EngineError::Divergence {
            step: self.k,
            time: self.k as f64 * self.config.delta,
        })?;
        if self.k.is_multiple_of(self.config.record_every) {
            self.record(
                self.k,
                &self.states.clone(),
                &out.xhat,
                Some(&out.z),
                &out.triggered,
                storage,
            );
        }
        self.monitor.observe_events(&out.eligible, &out.triggered);
        self.states = out.states.clone();
        self.xhat = out.xhat.clone();
        self.k += 1;
        self.last_triggered = out.triggered.clone();
        let storage_next = self.storage_total().map_err(|_| EngineError::Divergence {
            step: self.k,
            time: self.k as f64 * self.config.delta,
        })?;
        let lambdas: Vec<Vector> = self.states.iter().map(|s| s.lambda.clone()).collect();
        self.monitor.observe_state(&lambdas, storage_next);
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        k: u64,
        states: &[AgentState],
        xhat: &[Vector],
        z: Option<&[Vector]>,
        triggered: &[bool],
        storage: f64,
    ) {
        let agents = states
            .iter()
            .enumerate()
            .map(|(i, s)| AgentSample {
                x: s.x.clone(),
                lambda: s.lambda.clone(),
                xhat: xhat[i].clone(),
                z: z.map(|z| z[i].clone()),
                triggered: triggered[i],
            })
            .collect();
        self.records.push(TraceRecord {
            step: k,
            time: k as f64 * self.config.delta,
            agents,
            storage_total: storage,
        });
    }

    pub fn finish(mut self) -> Result<SimulationTrace, EngineError> {
        // closing sample at k_final; its events have not been evaluated
        let storage = self.storage_total()?;
        let z: Vec<Vector> = self
            .states
            .iter()
            .zip(&self.specs)
            .map(|(s, spec)| z_value(s, spec, self.config.alpha))
            .collect::<Result<_, _>>()?;
        let states = self.states.clone();
        let xhat = self.xhat.clone();
        let none = vec![false; states.len()];
        self.record(self.k, &states, &xhat, Some(&z), &none, storage);
        let xs: Vec<Vector> = self.states.iter().map(|s| s.x.clone()).collect();
        let metrics = self
            .monitor
            .metrics(&xs, &self.opt.x_star, self.k, self.k as f64 * self.config.delta);
        Ok(SimulationTrace {
            kind: TraceKind::Discrete,
            dim: xs[0].len(),
            records: self.records,
            metrics,
        })
    }

    pub fn run(mut self) -> Result<SimulationTrace, EngineError> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }
}

/// Runs `k_final` steps against the centralized optimum.
pub fn run_dt(
    config: DtConfig,
    specs: &[ObjectiveSpec],
    schedule: &GraphSchedule,
    policy: &TriggerPolicy,
) -> Result<SimulationTrace, EngineError> {
    config.validate_shape(specs, schedule)?;
    let opt = optimum_for(specs, config.alpha, config.x0[0].len())?;
    DtSimulation::new(config, specs, schedule, policy, opt)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::{initial_states, reference_objectives, reference_schedule_dt};
    use crate::objective::ObjectiveKind;
    use crate::trigger::TriggerMode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn reference_config(beta: f64, seed: u64) -> DtConfig {
        DtConfig::new(1.0, beta, 0.1, initial_states(5, 1, seed))
    }

    #[test]
    fn euler_step_plug_in() {
        let spec = ObjectiveSpec::catalog(0, ObjectiveKind::Quadratic { a: 1.0, b: 0.0, c: 0.0 }).unwrap();
        let cfg = DtConfig::new(1.0, 0.2, 0.1, vec![v1(1.0)]);
        let policy = TriggerPolicy::exact(1, 0.5).unwrap();
        let out = dt_step(
            0,
            &[AgentState::new(v1(1.0))],
            &[v1(1.0)],
            &WeightedDigraph::empty(1),
            &[spec],
            &cfg,
            &policy,
            &[1.0],
        )
        .unwrap();
        assert_abs_diff_eq!(out.states[0].x[0], 0.9, epsilon = 1e-15);
        assert_eq!(out.z[0][0], 1.0);
        assert!(!out.triggered[0] && !out.eligible[0]);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let specs = reference_objectives();
        let opt = optimum_for(&specs, 1.0, 1).unwrap();
        let states: Vec<AgentState> = opt
            .lambda_star
            .iter()
            .map(|l| AgentState {
                x: opt.x_star.clone(),
                lambda: l.clone(),
            })
            .collect();
        let xhat = vec![opt.x_star.clone(); 5];
        let cfg = reference_config(0.1, 0);
        let policy = TriggerPolicy::exact(5, 0.99).unwrap();
        let g = &crate::defaults::reference_modes()[0];
        let out = dt_step(0, &states, &xhat, g, &specs, &cfg, &policy, &[1.0; 5]).unwrap();
        for (a, b) in out.states.iter().zip(&states) {
            assert!((&a.x - &b.x).norm() < 1e-10);
            assert_eq!(a.lambda, b.lambda);
        }
        for (spec, s) in specs.iter().zip(&states) {
            assert!(dt_storage_value(s, spec, 1.0, 0.1, &opt).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn triggers_commit_simultaneously() {
        // both agents fire; each input must use the other's fresh broadcast
        let specs = vec![
            ObjectiveSpec::catalog(0, ObjectiveKind::Quadratic { a: 1.0, b: 0.0, c: 0.0 }).unwrap(),
            ObjectiveSpec::catalog(1, ObjectiveKind::Quadratic { a: 1.0, b: 0.0, c: 0.0 }).unwrap(),
        ];
        let g = WeightedDigraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let states = vec![AgentState::new(v1(0.0)), AgentState::new(v1(1.0))];
        let xhat = vec![v1(5.0), v1(-5.0)];
        let cfg = DtConfig::new(1.0, 0.2, 0.1, vec![v1(0.0), v1(1.0)]);
        let policy = TriggerPolicy::exact(2, 0.5).unwrap();
        let out = dt_step(0, &states, &xhat, &g, &specs, &cfg, &policy, &[1.0, 1.0]).unwrap();
        assert_eq!(out.triggered, vec![true, true]);
        assert_eq!(out.xhat, vec![v1(0.0), v1(1.0)]);
        assert_abs_diff_eq!(out.inputs[0][0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(out.states[0].lambda[0], -0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(out.states[1].lambda[0], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn reference_run_converges_with_sparse_events() {
        let specs = reference_objectives();
        let policy = TriggerPolicy::exact(5, 0.99).unwrap();
        let trace = run_dt(
            reference_config(0.1, defaults::SEED),
            &specs,
            &reference_schedule_dt(),
            &policy,
        )
        .unwrap();
        let m = &trace.metrics;
        assert!(m.final_error < 1e-3, "final error {}", m.final_error);
        assert!(m.comm_ratio < 1.0);
        assert_eq!(m.lyapunov_violations, 0);
        assert!(m.lambda_sum_drift < 1e-12);
        assert_eq!(trace.records.len() as u64, defaults::K_FINAL + 1);
    }

    #[test]
    fn bypass_broadcasts_every_step() {
        let specs = reference_objectives();
        let policy = TriggerPolicy::bypass(5);
        let trace = run_dt(
            reference_config(0.1, defaults::SEED),
            &specs,
            &reference_schedule_dt(),
            &policy,
        )
        .unwrap();
        assert_eq!(trace.metrics.comm_ratio, 1.0);
        assert!(trace.metrics.final_error < 1e-3);
    }

    #[test]
    fn practical_mode_floors_events() {
        let specs = reference_objectives();
        let exact = TriggerPolicy::exact(5, 0.99).unwrap();
        let practical = TriggerPolicy::new(vec![0.99; 5], 1e-4, TriggerMode::Practical).unwrap();
        let run = |p: &TriggerPolicy| {
            run_dt(reference_config(0.1, 4), &specs, &reference_schedule_dt(), p)
                .unwrap()
                .metrics
        };
        let a = run(&exact);
        let b = run(&practical);
        assert!(b.total_triggers < a.total_triggers);
        assert!(b.final_error < 0.1);
    }

    #[test]
    fn stepsize_bound_is_enforced() {
        let specs = reference_objectives();
        let policy = TriggerPolicy::exact(5, 0.99).unwrap();
        let mut cfg = DtConfig::new(1.0, 0.05, 0.6, initial_states(5, 1, 1));
        cfg.k_final = 10;
        let err = run_dt(cfg.clone(), &specs, &reference_schedule_dt(), &policy).unwrap_err();
        assert!(err.to_string().contains("0.5882"), "{err}");
        cfg.force = true;
        assert!(run_dt(cfg, &specs, &reference_schedule_dt(), &policy).is_ok());
    }

    #[test]
    fn trace_rows_expose_z() {
        let specs = reference_objectives();
        let policy = TriggerPolicy::exact(5, 0.99).unwrap();
        let mut cfg = reference_config(0.1, 2);
        cfg.k_final = 5;
        let trace = run_dt(cfg, &specs, &reference_schedule_dt(), &policy).unwrap();
        for r in &trace.records {
            for (a, spec) in r.agents.iter().zip(&specs) {
                let s = AgentState {
                    x: a.x.clone(),
                    lambda: a.lambda.clone(),
                };
                assert_eq!(a.z.as_ref().unwrap(), &z_value(&s, spec, 1.0).unwrap());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lambda_sum_is_conserved(seed in 0u64..10_000, beta in 0.01f64..0.35, k in 1u64..300) {
            let specs = reference_objectives();
            let policy = TriggerPolicy::exact(5, 0.99).unwrap();
            let mut cfg = reference_config(beta, seed);
            cfg.k_final = k;
            let trace = run_dt(cfg, &specs, &reference_schedule_dt(), &policy).unwrap();
            prop_assert!(trace.metrics.lambda_sum_drift <= 1e-12);
        }

        #[test]
        fn at_most_one_event_per_agent_per_step(seed in 0u64..10_000) {
            let specs = reference_objectives();
            let policy = TriggerPolicy::exact(5, 0.99).unwrap();
            let mut cfg = reference_config(0.3, seed);
            cfg.k_final = 100;
            let trace = run_dt(cfg, &specs, &reference_schedule_dt(), &policy).unwrap();
            prop_assert!(trace.metrics.trigger_counts.iter().all(|&c| c <= 100));
            prop_assert!(trace.metrics.comm_ratio <= 1.0);
        }
    }
}
