//! Continuous-time simulation with fixed-step RK4.
//!
//! Broadcast states and the graph snapshot are held for a whole step, so the
//! coupling input is constant inside a step and `lambda` advances exactly by
//! `-h u`. Triggers are checked on the post-step state.

use crate::graph::{GraphSchedule, WeightedDigraph};
use crate::objective::{solve_centralized_optimum_from, ObjectiveError, ObjectiveSpec, OptimumSolution};
use crate::passivity::{IndexFormula, NetworkCertificate};
use crate::trace::{AgentSample, RunMonitor, SimulationTrace, TraceKind, TraceRecord};
use crate::trigger::{neighbor_gap, should_trigger, CommState, Threshold, TriggerPolicy};
use crate::{defaults, EngineError, Vector};

/// Default tolerance on one-step storage growth.
pub const LYAPUNOV_TOL: f64 = 1e-8;
/// `|sum_i lambda_i(0)|` must not exceed this.
pub const LAMBDA_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub x: Vector,
    pub lambda: Vector,
}

impl AgentState {
    pub fn new(x: Vector) -> Self {
        let lambda = Vector::zeros(x.len());
        AgentState { x, lambda }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.lambda.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct CtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
    pub t_final: f64,
    pub x0: Vec<Vector>,
    /// All-zero when `None`.
    pub lambda0: Option<Vec<Vector>>,
    pub record_every: u64,
    /// Stop once `max_i |x_i - x*| < stop_tol`; zero runs to `t_final`.
    pub stop_tol: f64,
    pub lyapunov_tol: f64,
    /// Skip the gain condition.
    pub force: bool,
}

impl CtConfig {
    pub fn new(alpha: f64, beta: f64, x0: Vec<Vector>) -> Self {
        CtConfig {
            alpha,
            beta,
            h: defaults::STEP_CT,
            t_final: defaults::T_FINAL,
            x0,
            lambda0: None,
            record_every: 1,
            stop_tol: 0.0,
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

    pub fn steps(&self) -> u64 {
        (self.t_final / self.h).round() as u64
    }

    /// Checks everything except the gain condition.
    pub fn validate_shape(&self, specs: &[ObjectiveSpec], schedule: &GraphSchedule) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be non-negative, got {}", self.t_final));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        check_initial(&self.x0, self.lambda0.as_deref(), specs, schedule)
    }
}

pub(crate) fn check_initial(
    x0: &[Vector],
    lambda0: Option<&[Vector]>,
    specs: &[ObjectiveSpec],
    schedule: &GraphSchedule,
) -> Result<(), EngineError> {
    let n = specs.len();
    if n == 0 {
        return Err(EngineError::Config("no agents".into()));
    }
    if x0.len() != n || schedule.n() != n {
        return Err(EngineError::Config(format!(
            "{n} objectives, {} initial states, {} graph nodes",
            x0.len(),
            schedule.n()
        )));
    }
    let m = x0[0].len();
    if m == 0 || x0.iter().any(|x| x.len() != m) {
        return Err(EngineError::Config(
            "initial states must share a positive dimension".into(),
        ));
    }
    if x0.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(EngineError::Config("initial states must be finite".into()));
    }
    if let Some(l0) = lambda0 {
        if l0.len() != n || l0.iter().any(|l| l.len() != m) {
            return Err(EngineError::Config("lambda0 must match x0 in shape".into()));
        }
        let sum = crate::trace::lambda_sum(l0);
        let scale = l0.iter().map(|l| l.norm()).sum::<f64>().max(1.0);
        if !(sum.norm() <= LAMBDA_SUM_TOL * scale) {
            return Err(EngineError::Config(format!(
                "initial auxiliary states must sum to zero, |sum| = {:e}",
                sum.norm()
            )));
        }
    }
    schedule.check_balanced()?;
    Ok(())
}

/// `u_i = beta sum_j a_ij (xhat_j - xhat_i)`.
pub fn coupling_input(xhat: &[Vector], g: &WeightedDigraph, beta: f64, agent: usize) -> Vector {
    let mut u = Vector::zeros(xhat[agent].len());
    for (j, w) in g.in_neighbors(agent) {
        u += (&xhat[j] - &xhat[agent]) * w;
    }
    u * beta
}

pub fn coupling_inputs(xhat: &[Vector], g: &WeightedDigraph, beta: f64) -> Vec<Vector> {
    (0..xhat.len()).map(|i| coupling_input(xhat, g, beta, i)).collect()
}

/// Time derivatives `(x', lambda')` packed as [`AgentState`]s.
pub fn vector_field(
    states: &[AgentState],
    inputs: &[Vector],
    specs: &[ObjectiveSpec],
    alpha: f64,
) -> Result<Vec<AgentState>, ObjectiveError> {
    states
        .iter()
        .zip(inputs)
        .zip(specs)
        .map(|((s, u), spec)| {
            let g = spec.gradient(&s.x)?;
            Ok(AgentState {
                x: -(g * alpha) - &s.lambda,
                lambda: -u,
            })
        })
        .collect()
}

/// Agent storage `V_i` relative to the optimum.
pub fn storage_value(
    state: &AgentState,
    spec: &ObjectiveSpec,
    alpha: f64,
    opt: &OptimumSolution,
) -> Result<f64, ObjectiveError> {
    let g = spec.gradient(&state.x)?;
    let xdot = -(g * alpha) - &state.lambda;
    storage_with_rate(&xdot, state, spec, alpha, opt)
}

/// Storage with an explicit rate term: `(1/(alpha mu))|r|^2 - dx'dlambda
/// + alpha grad f(x*)'dx + alpha (f(x*) - f(x))`.
pub(crate) fn storage_with_rate(
    rate: &Vector,
    state: &AgentState,
    spec: &ObjectiveSpec,
    alpha: f64,
    opt: &OptimumSolution,
) -> Result<f64, ObjectiveError> {
    let x_star = &opt.x_star;
    let g_star = spec.gradient(x_star)?;
    let lambda_star = -(&g_star * alpha);
    let dx = &state.x - x_star;
    let dl = &state.lambda - lambda_star;
    Ok(rate.norm_squared() / (alpha * spec.mu) - dx.dot(&dl)
        + alpha * g_star.dot(&dx)
        + alpha * (spec.value(x_star)? - spec.value(&state.x)?))
}

pub fn storage_total(
    states: &[AgentState],
    specs: &[ObjectiveSpec],
    alpha: f64,
    opt: &OptimumSolution,
) -> Result<f64, ObjectiveError> {
    states
        .iter()
        .zip(specs)
        .map(|(s, spec)| storage_value(s, spec, alpha, opt))
        .sum()
}

/// Optimum oracle for the given objectives, in the dimension of `x0`.
pub fn optimum_for(specs: &[ObjectiveSpec], alpha: f64, m: usize) -> Result<OptimumSolution, ObjectiveError> {
    solve_centralized_optimum_from(specs, alpha, defaults::OPTIMUM_TOL, &Vector::zeros(m))
}

/// Per-step observations.
#[derive(Clone, Debug)]
pub struct CtStepReport {
    /// Coupling inputs held during the step.
    pub inputs: Vec<Vector>,
    pub triggered: Vec<bool>,
    pub eligible: Vec<bool>,
    /// Squared sampling errors at the check, before any commit.
    pub sampling_errors: Vec<f64>,
    pub thresholds: Vec<Threshold>,
    pub storage_total: f64,
}

/// Steppable continuous-time run.
#[derive(Clone, Debug)]
pub struct CtSimulation {
    config: CtConfig,
    specs: Vec<ObjectiveSpec>,
    schedule: GraphSchedule,
    policy: TriggerPolicy,
    nu: Vec<f64>,
    opt: OptimumSolution,
    states: Vec<AgentState>,
    comm: CommState,
    step: u64,
    monitor: RunMonitor,
    records: Vec<TraceRecord>,
}

impl CtSimulation {
    pub fn new(
        config: CtConfig,
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
        let cert = NetworkCertificate::certify(
            specs,
            &schedule.max_in_degrees(),
            config.alpha,
            None,
            IndexFormula::Printed,
        )?;
        if !config.force {
            let violations = cert.check_ct(config.beta);
            if !violations.is_empty() {
                let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return Err(EngineError::Config(msg.join("; ")));
            }
        }
        let states = config.initial_states();
        let x0: Vec<Vector> = states.iter().map(|s| s.x.clone()).collect();
        let lambda0: Vec<Vector> = states.iter().map(|s| s.lambda.clone()).collect();
        let storage0 = storage_total(&states, specs, config.alpha, &opt)?;
        let monitor = RunMonitor::new(specs.len(), &lambda0, storage0, config.lyapunov_tol);
        let comm = CommState::new(&x0);
        let mut sim = CtSimulation {
            nu: cert.nu_ct_magnitudes(),
            config,
            specs: specs.to_vec(),
            schedule: schedule.clone(),
            policy: policy.clone(),
            opt,
            states,
            comm,
            step: 0,
            monitor,
            records: Vec::new(),
        };
        let flags = vec![false; sim.specs.len()];
        sim.record(&flags, storage0);
        Ok(sim)
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn comm(&self) -> &CommState {
        &self.comm
    }

    pub fn optimum(&self) -> &OptimumSolution {
        &self.opt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.h
    }

    pub fn nu_magnitudes(&self) -> &[f64] {
        &self.nu
    }

    pub fn storage_total(&self) -> Result<f64, ObjectiveError> {
        storage_total(&self.states, &self.specs, self.config.alpha, &self.opt)
    }

    pub fn is_done(&self) -> bool {
        if self.step >= self.config.steps() {
            return true;
        }
        self.config.stop_tol > 0.0 && self.error() < self.config.stop_tol
    }

    fn error(&self) -> f64 {
        let xs: Vec<Vector> = self.states.iter().map(|s| s.x.clone()).collect();
        crate::trace::final_error(&xs, &self.opt.x_star)
    }

    /// Advances one RK4 step, then evaluates and commits triggers.
    pub fn step(&mut self) -> Result<CtStepReport, EngineError> {
        let h = self.config.h;
        let t = self.time();
        let step_no = self.step + 1;
        let diverged = || EngineError::Divergence {
            step: step_no,
            time: t + h,
        };
        let g = self.schedule.graph_at(t).clone();
        let inputs = coupling_inputs(self.comm.xhat(), &g, self.config.beta);

        let field = |s: &[AgentState]| vector_field(s, &inputs, &self.specs, self.config.alpha);
        let shifted = |base: &[AgentState], k: &[AgentState], c: f64| -> Vec<AgentState> {
            base.iter()
                .zip(k)
                .map(|(b, d)| AgentState {
                    x: &b.x + &d.x * c,
                    lambda: &b.lambda + &d.lambda * c,
                })
                .collect()
        };
        let k1 = field(&self.states).map_err(|_| diverged())?;
        let k2 = field(&shifted(&self.states, &k1, h / 2.0)).map_err(|_| diverged())?;
        let k3 = field(&shifted(&self.states, &k2, h / 2.0)).map_err(|_| diverged())?;
        let k4 = field(&shifted(&self.states, &k3, h)).map_err(|_| diverged())?;
        let mut next = Vec::with_capacity(self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let dx = (&k1[i].x + &k2[i].x * 2.0 + &k3[i].x * 2.0 + &k4[i].x) * (h / 6.0);
            // the input is constant over the step
            let dl = -(&inputs[i] * h);
            next.push(AgentState {
                x: &s.x + dx,
                lambda: &s.lambda + dl,
            });
        }
        if next.iter().any(|s| !s.is_finite()) {
            return Err(diverged());
        }
        self.states = next;
        self.step += 1;

        let g_now = self.schedule.graph_at(self.time()).clone();
        let report = self.check_triggers(&g_now, inputs)?;
        self.monitor.observe_events(&report.eligible, &report.triggered);
        let lambdas: Vec<Vector> = self.states.iter().map(|s| s.lambda.clone()).collect();
        self.monitor.observe_state(&lambdas, report.storage_total);
        if self.step.is_multiple_of(self.config.record_every) || self.is_done() {
            self.record(&report.triggered, report.storage_total);
        }
        Ok(report)
    }

    fn check_triggers(&mut self, g: &WeightedDigraph, inputs: Vec<Vector>) -> Result<CtStepReport, EngineError> {
        let n = self.states.len();
        let mut triggered = vec![false; n];
        let mut eligible = vec![false; n];
        let mut errors = vec![0.0; n];
        let mut thresholds = vec![Threshold::Never; n];
        for i in 0..n {
            let d_in = g.in_degree(i);
            eligible[i] = d_in > 0.0;
            errors[i] = (&self.states[i].x - &self.comm.xhat()[i]).norm_squared();
            let gap = neighbor_gap(g, self.comm.xhat(), i);
            thresholds[i] = self.policy.threshold(i, self.nu[i], self.config.beta, d_in, gap);
            triggered[i] = eligible[i] && should_trigger(errors[i], thresholds[i], &self.policy);
        }
        for i in (0..n).filter(|&i| triggered[i]) {
            let x = self.states[i].x.clone();
            self.comm.commit_trigger(i, &x);
        }
        let storage = self.storage_total().map_err(|_| EngineError::Divergence {
            step: self.step,
            time: self.time(),
        })?;
        Ok(CtStepReport {
            inputs,
            triggered,
            eligible,
            sampling_errors: errors,
            thresholds,
            storage_total: storage,
        })
    }

    fn record(&mut self, triggered: &[bool], storage: f64) {
        let agents = self
            .states
            .iter()
            .zip(self.comm.xhat())
            .zip(triggered)
            .map(|((s, xhat), &trig)| AgentSample {
                x: s.x.clone(),
                lambda: s.lambda.clone(),
                xhat: xhat.clone(),
                z: None,
                triggered: trig,
            })
            .collect();
        self.records.push(TraceRecord {
            step: self.step,
            time: self.time(),
            agents,
            storage_total: storage,
        });
    }

    pub fn finish(self) -> SimulationTrace {
        let xs: Vec<Vector> = self.states.iter().map(|s| s.x.clone()).collect();
        let metrics = self.monitor.metrics(&xs, &self.opt.x_star, self.step, self.time());
        SimulationTrace {
            kind: TraceKind::Continuous,
            dim: xs[0].len(),
            records: self.records,
            metrics,
        }
    }

    pub fn run(mut self) -> Result<SimulationTrace, EngineError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }
}

/// Runs to completion against the centralized optimum.
pub fn run_ct(
    config: CtConfig,
    specs: &[ObjectiveSpec],
    schedule: &GraphSchedule,
    policy: &TriggerPolicy,
) -> Result<SimulationTrace, EngineError> {
    config.validate_shape(specs, schedule)?;
    let opt = optimum_for(specs, config.alpha, config.x0[0].len())?;
    CtSimulation::new(config, specs, schedule, policy, opt)?.run()
}
