//! Recorded samples, run metrics, and their CSV/JSON renderings.
//!
//! Floats are written in shortest round-trip form, so a trace is a pure
//! function of its run and reruns are byte-identical.

use std::io::Write;

use serde::Serialize;

use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Continuous,
    Discrete,
}

/// One agent at one recorded instant.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSample {
    pub x: Vector,
    pub lambda: Vector,
    pub xhat: Vector,
    /// `alpha grad f_i(x_i) + lambda_i`; discrete runs only.
    pub z: Option<Vector>,
    pub triggered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub time: f64,
    pub agents: Vec<AgentSample>,
    pub storage_total: f64,
}

/// Summary of a finished run. Keys are stable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    /// `max_i |x_i - x*|`.
    pub final_error: f64,
    /// `max_ij |x_i - x_j|`.
    pub consensus_gap: f64,
    pub trigger_counts: Vec<u64>,
    pub total_triggers: u64,
    /// Per agent, the number of samples at which it had an in-neighbor.
    pub eligible_samples: Vec<u64>,
    /// `total_triggers / sum(eligible_samples)`, zero when nothing was eligible.
    pub comm_ratio: f64,
    /// Steps at which the total storage rose by more than the tolerance.
    pub lyapunov_violations: u64,
    pub lyapunov_tol: f64,
    /// Largest one-step rise of the total storage (negative if it always fell).
    pub max_storage_increase: f64,
    /// `max_k |sum_i lambda_i(k) - sum_i lambda_i(0)|`.
    pub lambda_sum_drift: f64,
    pub steps: u64,
    pub final_time: f64,
    pub x_star: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SimulationTrace {
    pub kind: TraceKind,
    pub dim: usize,
    pub records: Vec<TraceRecord>,
    pub metrics: RunMetrics,
}

impl SimulationTrace {
    /// Final recorded decision vectors.
    pub fn final_states(&self) -> Vec<Vector> {
        self.records
            .last()
            .map(|r| r.agents.iter().map(|a| a.x.clone()).collect())
            .unwrap_or_default()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.dim;
        let mut header = vec![match self.kind {
            TraceKind::Continuous => "t".to_string(),
            TraceKind::Discrete => "k".to_string(),
        }];
        header.push("agent".into());
        let mut names = vec!["x", "lambda", "xhat"];
        if self.kind == TraceKind::Discrete {
            names.push("z");
        }
        for name in &names {
            header.extend(column_names(name, m));
        }
        header.push("triggered".into());
        header.push("V_total".into());
        w.write_record(&header)?;

        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for rec in &self.records {
            for (i, a) in rec.agents.iter().enumerate() {
                row.clear();
                row.push(match self.kind {
                    TraceKind::Continuous => fmt_f64(rec.time),
                    TraceKind::Discrete => rec.step.to_string(),
                });
                row.push((i + 1).to_string());
                for v in [&a.x, &a.lambda, &a.xhat] {
                    row.extend(v.iter().map(|&c| fmt_f64(c)));
                }
                if self.kind == TraceKind::Discrete {
                    match &a.z {
                        Some(z) => row.extend(z.iter().map(|&c| fmt_f64(c))),
                        None => row.extend(std::iter::repeat_n(String::new(), m)),
                    }
                }
                row.push(u8::from(a.triggered).to_string());
                row.push(fmt_f64(rec.storage_total));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize")
    }
}

fn column_names(name: &str, m: usize) -> Vec<String> {
    if m == 1 {
        vec![name.to_string()]
    } else {
        (0..m).map(|c| format!("{name}_{c}")).collect()
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// `max_i |x_i - x*|`.
pub fn final_error(xs: &[Vector], x_star: &Vector) -> f64 {
    xs.iter().map(|x| (x - x_star).norm()).fold(0.0, f64::max)
}

/// `max_ij |x_i - x_j|`.
pub fn consensus_gap(xs: &[Vector]) -> f64 {
    let mut gap = 0.0_f64;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            gap = gap.max((a - b).norm());
        }
    }
    gap
}

/// Running tallies shared by both engines.
#[derive(Clone, Debug)]
pub(crate) struct RunMonitor {
    pub trigger_counts: Vec<u64>,
    pub eligible: Vec<u64>,
    pub violations: u64,
    pub max_increase: f64,
    pub lambda_sum0: Vector,
    pub lambda_drift: f64,
    pub storage_prev: f64,
    pub tol: f64,
}

impl RunMonitor {
    pub fn new(n: usize, lambda0: &[Vector], storage0: f64, tol: f64) -> Self {
        RunMonitor {
            trigger_counts: vec![0; n],
            eligible: vec![0; n],
            violations: 0,
            max_increase: f64::NEG_INFINITY,
            lambda_sum0: lambda_sum(lambda0),
            lambda_drift: 0.0,
            storage_prev: storage0,
            tol,
        }
    }

    pub fn observe_events(&mut self, eligible: &[bool], triggered: &[bool]) {
        for i in 0..eligible.len() {
            self.eligible[i] += u64::from(eligible[i]);
            self.trigger_counts[i] += u64::from(triggered[i]);
        }
    }

    pub fn observe_state(&mut self, lambdas: &[Vector], storage: f64) {
        let rise = storage - self.storage_prev;
        self.max_increase = self.max_increase.max(rise);
        if rise > self.tol {
            self.violations += 1;
        }
        self.storage_prev = storage;
        let drift = (lambda_sum(lambdas) - &self.lambda_sum0).norm();
        self.lambda_drift = self.lambda_drift.max(drift);
    }

    pub fn metrics(&self, xs: &[Vector], x_star: &Vector, steps: u64, final_time: f64) -> RunMetrics {
        let total_triggers: u64 = self.trigger_counts.iter().sum();
        let total_eligible: u64 = self.eligible.iter().sum();
        RunMetrics {
            final_error: final_error(xs, x_star),
            consensus_gap: consensus_gap(xs),
            trigger_counts: self.trigger_counts.clone(),
            total_triggers,
            eligible_samples: self.eligible.clone(),
            comm_ratio: if total_eligible == 0 {
                0.0
            } else {
                total_triggers as f64 / total_eligible as f64
            },
            lyapunov_violations: self.violations,
            lyapunov_tol: self.tol,
            max_storage_increase: if steps == 0 { 0.0 } else { self.max_increase },
            lambda_sum_drift: self.lambda_drift,
            steps,
            final_time,
            x_star: x_star.iter().copied().collect(),
        }
    }
}

pub(crate) fn lambda_sum(lambdas: &[Vector]) -> Vector {
    let m = lambdas.first().map_or(0, |l| l.len());
    lambdas.iter().fold(Vector::zeros(m), |acc, l| acc + l)
}
