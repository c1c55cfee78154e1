//! Scenario files: a flat TOML document with agent and mode tables.
//!
//! Agent and node numbers in files are 1-based.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ifpopt_core::defaults;
use ifpopt_core::graph::{GraphSchedule, WeightedDigraph};
use ifpopt_core::objective::{verify_moduli, ObjectiveKind, ObjectiveSpec};
use ifpopt_core::{CtConfig, DtConfig, IndexFormula, TriggerMode, TriggerPolicy, Vector};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "ifpopt-scenario/1";

/// Samples and radius used to check user-declared moduli.
const MODULUS_SAMPLES: usize = 2000;
const MODULUS_RADIUS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub alpha: f64,
    pub beta: f64,
    /// Discrete-time stepsize; required by `run-dt` and the DT certificate.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub trigger: TriggerMode,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_k_final")]
    pub k_final: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Recording cadence in integrator steps (CT) or iterations (DT).
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default)]
    pub dt_index: IndexFormula,
    /// Decision dimension; x0 is drawn from `[0, 1]^dim` when absent.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub x0: Option<Vec<Vec<f64>>>,
    pub agents: Vec<AgentEntry>,
    pub schedule: ScheduleEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub objective: String,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub lip: Option<f64>,
    /// Per-agent trigger constant; falls back to the scenario's `c`.
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    /// Seconds per mode.
    pub dwell: f64,
    /// Iterations per mode; `round(dwell / delta)` when absent.
    #[serde(default)]
    pub dwell_steps: Option<u64>,
    pub modes: Vec<ModeEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    /// `[from, to, weight]` triples.
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    /// Receiver rows: `adjacency[i][j] > 0` means `j` sends to `i`.
    #[serde(default)]
    pub adjacency: Option<Vec<Vec<f64>>>,
}

fn default_c() -> f64 {
    defaults::C
}
fn default_h() -> f64 {
    defaults::STEP_CT
}
fn default_t_final() -> f64 {
    defaults::T_FINAL
}
fn default_k_final() -> u64 {
    defaults::K_FINAL
}
fn default_seed() -> u64 {
    defaults::SEED
}
fn default_record_every() -> u64 {
    1
}
fn default_dim() -> usize {
    1
}

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub zeta: Option<f64>,
    pub no_trigger: bool,
    pub index: Option<IndexFormula>,
}

/// Everything an engine run needs.
#[derive(Clone, Debug)]
pub struct Built {
    pub specs: Vec<ObjectiveSpec>,
    pub modes: Vec<WeightedDigraph>,
    pub policy: TriggerPolicy,
    pub x0: Vec<Vector>,
}

impl Scenario {
    /// The five-agent reference scenario.
    pub fn reference() -> Self {
        let agents = ["quad(1,3,1)", "quad(1,-1,0)", "sinquad", "logexp1", "logexp2"]
            .into_iter()
            .map(|o| AgentEntry {
                objective: o.into(),
                mu: None,
                lip: None,
                c: None,
            })
            .collect();
        Scenario {
            schema: SCHEMA.into(),
            alpha: defaults::ALPHA,
            beta: defaults::BETA_CT,
            delta: Some(defaults::DELTA),
            c: defaults::C,
            zeta: 0.0,
            trigger: TriggerMode::Exact,
            h: defaults::STEP_CT,
            t_final: defaults::T_FINAL,
            k_final: defaults::K_FINAL,
            seed: defaults::SEED,
            record_every: 1,
            stop_tol: 0.0,
            dt_index: IndexFormula::Printed,
            dim: 1,
            x0: None,
            agents,
            schedule: ScheduleEntry {
                dwell: defaults::DWELL_SECONDS,
                dwell_steps: None,
                modes: vec![
                    ModeEntry {
                        edges: Some(vec![(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 1, 1.0)]),
                        adjacency: None,
                    },
                    ModeEntry {
                        edges: Some(vec![(1, 3, 1.0), (3, 5, 1.0), (5, 2, 1.0), (2, 4, 1.0), (4, 1, 1.0)]),
                        adjacency: None,
                    },
                ],
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).context("malformed TOML")?;
        let scenario: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("config error at `{path}`: {}", e.into_inner())
        })?;
        if scenario.schema != SCHEMA {
            bail!(
                "config error at `schema`: expected \"{SCHEMA}\", found \"{}\"",
                scenario.schema
            );
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = o.beta {
            self.beta = b;
        }
        if let Some(d) = o.delta {
            self.delta = Some(d);
        }
        if let Some(z) = o.zeta {
            self.zeta = z;
            if self.trigger != TriggerMode::Bypass {
                self.trigger = if z > 0.0 {
                    TriggerMode::Practical
                } else {
                    TriggerMode::Exact
                };
            }
        }
        if o.no_trigger {
            self.trigger = TriggerMode::Bypass;
        }
        if let Some(f) = o.index {
            self.dt_index = f;
        }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// Validates every field and assembles objectives, graphs, policy and
    /// initial states. Errors name the offending field.
    pub fn build(&self) -> Result<Built> {
        let n = self.n();
        if n == 0 {
            bail!("config error at `agents`: at least one agent is required");
        }
        positive("alpha", self.alpha)?;
        if !(self.beta.is_finite()) {
            bail!("config error at `beta`: must be finite");
        }
        if let Some(d) = self.delta {
            positive("delta", d)?;
        }
        positive("h", self.h)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            bail!("config error at `t_final`: must be >= 0");
        }
        if self.record_every == 0 {
            bail!("config error at `record_every`: must be >= 1");
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            bail!("config error at `stop_tol`: must be >= 0");
        }
        if self.dim == 0 {
            bail!("config error at `dim`: must be >= 1");
        }

        let mut specs = Vec::with_capacity(n);
        let mut cs = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            let kind: ObjectiveKind = a
                .objective
                .parse()
                .map_err(|e| anyhow!("config error at `agents[{i}].objective`: {e}"))?;
            let (cmu, clip) = kind
                .certified_moduli()
                .map_err(|e| anyhow!("config error at `agents[{i}].objective`: {e}"))?;
            let mu = a.mu.unwrap_or(cmu);
            let lip = a.lip.unwrap_or(clip);
            let spec = ObjectiveSpec::new(i, kind, mu, lip)
                .map_err(|e| anyhow!("config error at `agents[{i}].mu`/`lip`: {e}"))?;
            if a.mu.is_some() || a.lip.is_some() {
                verify_moduli(&spec, self.dim, MODULUS_SAMPLES, MODULUS_RADIUS, self.seed)
                    .map_err(|e| anyhow!("config error at `agents[{i}]`: {e}"))?;
            }
            specs.push(spec);
            cs.push(a.c.unwrap_or(self.c));
        }
        for (i, &c) in cs.iter().enumerate() {
            if !(c > 0.0 && c < 1.0) {
                let field = if self.agents[i].c.is_some() {
                    format!("agents[{i}].c")
                } else {
                    "c".into()
                };
                bail!("config error at `{field}`: must lie in (0, 1), got {c}");
            }
        }
        let policy = TriggerPolicy::new(cs, self.zeta, self.trigger)
            .map_err(|e| anyhow!("config error at `zeta`/`trigger`: {e}"))?;

        if self.schedule.modes.is_empty() {
            bail!("config error at `schedule.modes`: at least one mode is required");
        }
        positive("schedule.dwell", self.schedule.dwell)?;
        if self.schedule.dwell_steps == Some(0) {
            bail!("config error at `schedule.dwell_steps`: must be >= 1");
        }
        let mut modes = Vec::with_capacity(self.schedule.modes.len());
        for (k, m) in self.schedule.modes.iter().enumerate() {
            modes.push(build_mode(k, m, n)?);
        }

        let x0 = match &self.x0 {
            Some(rows) => {
                if rows.len() != n {
                    bail!("config error at `x0`: {} rows for {n} agents", rows.len());
                }
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| {
                        if r.len() != self.dim {
                            bail!("config error at `x0[{i}]`: length {} but dim is {}", r.len(), self.dim);
                        }
                        Ok(Vector::from_column_slice(r))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => defaults::initial_states(n, self.dim, self.seed),
        };
        Ok(Built {
            specs,
            modes,
            policy,
            x0,
        })
    }

    pub fn ct_schedule(&self, built: &Built) -> Result<GraphSchedule> {
        GraphSchedule::uniform(built.modes.clone(), self.schedule.dwell)
            .map_err(|e| anyhow!("config error at `schedule`: {e}"))
    }

    pub fn dt_dwell_steps(&self) -> Result<f64> {
        match self.schedule.dwell_steps {
            Some(s) => Ok(s as f64),
            None => {
                let delta = self.require_delta()?;
                Ok((self.schedule.dwell / delta).round().max(1.0))
            }
        }
    }

    pub fn dt_schedule(&self, built: &Built) -> Result<GraphSchedule> {
        GraphSchedule::uniform(built.modes.clone(), self.dt_dwell_steps()?)
            .map_err(|e| anyhow!("config error at `schedule`: {e}"))
    }

    pub fn require_delta(&self) -> Result<f64> {
        self.delta
            .ok_or_else(|| anyhow!("config error at `delta`: required for discrete-time runs"))
    }

    pub fn ct_config(&self, built: &Built, force: bool) -> CtConfig {
        let mut cfg = CtConfig::new(self.alpha, self.beta, built.x0.clone());
        cfg.h = self.h;
        cfg.t_final = self.t_final;
        cfg.record_every = self.record_every;
        cfg.stop_tol = self.stop_tol;
        cfg.force = force;
        cfg
    }

    pub fn dt_config(&self, built: &Built, force: bool) -> Result<DtConfig> {
        let mut cfg = DtConfig::new(self.alpha, self.beta, self.require_delta()?, built.x0.clone());
        cfg.k_final = self.k_final;
        cfg.record_every = self.record_every;
        cfg.index_formula = self.dt_index;
        cfg.force = force;
        Ok(cfg)
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bail!("config error at `{field}`: must be positive and finite, got {v}")
    }
}

fn build_mode(k: usize, m: &ModeEntry, n: usize) -> Result<WeightedDigraph> {
    let at = |what: &str| format!("schedule.modes[{k}].{what}");
    match (&m.edges, &m.adjacency) {
        (Some(edges), None) => {
            let mut zero_based = Vec::with_capacity(edges.len());
            for (e, &(from, to, w)) in edges.iter().enumerate() {
                if from == 0 || to == 0 || from > n || to > n {
                    bail!("config error at `{}[{e}]`: nodes must lie in 1..={n}", at("edges"));
                }
                zero_based.push((from - 1, to - 1, w));
            }
            WeightedDigraph::from_edges(n, &zero_based).map_err(|e| anyhow!("config error at `{}`: {e}", at("edges")))
        }
        (None, Some(rows)) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                bail!("config error at `{}`: must be {n} x {n}", at("adjacency"));
            }
            WeightedDigraph::from_rows(rows).map_err(|e| anyhow!("config error at `{}`: {e}", at("adjacency")))
        }
        _ => bail!("config error at `schedule.modes[{k}]`: give exactly one of `edges` or `adjacency`"),
    }
}
