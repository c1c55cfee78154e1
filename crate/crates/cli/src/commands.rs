//! Subcommand bodies. Each returns whether it succeeded; configuration
//! problems surface as errors.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ifpopt_core::{run_ct, run_dt, EngineError, IndexFormula, RunMetrics, SimulationTrace, TriggerMode};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::report::{certify, Certificate, Scope};
use crate::scenario::Scenario;

/// Acceptance thresholds for the reproduction runs.
pub const REPRODUCE_ERROR_TOL: f64 = 1e-3;
pub const REPRODUCE_DT_BETAS: [f64; 2] = [0.1, 0.3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Ct,
    Dt,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Ct => "ct",
            Mode::Dt => "dt",
        }
    }

    fn scope(self) -> Scope {
        match self {
            Mode::Ct => Scope::Ct,
            Mode::Dt => Scope::Dt,
        }
    }
}

pub fn cmd_check(scenario: &Scenario, out: Option<&Path>) -> Result<bool> {
    let built = scenario.build()?;
    let cert = certify(scenario, &built, Scope::Both)?;
    print!("{}", cert.text);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("certificate.txt"), &cert.text)?;
    }
    Ok(cert.passed)
}

pub struct RunOutcome {
    pub certificate: Certificate,
    pub trace: Option<SimulationTrace>,
    /// Divergence message when the run aborted.
    pub failure: Option<String>,
}

/// Certifies and runs one scenario without touching the filesystem.
pub fn simulate(scenario: &Scenario, mode: Mode, force: bool) -> Result<RunOutcome> {
    let built = scenario.build()?;
    let certificate = certify(scenario, &built, mode.scope())?;
    if !certificate.passed && !force {
        return Ok(RunOutcome {
            certificate,
            trace: None,
            failure: None,
        });
    }
    let result = match mode {
        Mode::Ct => run_ct(
            scenario.ct_config(&built, true),
            &built.specs,
            &scenario.ct_schedule(&built)?,
            &built.policy,
        ),
        Mode::Dt => run_dt(
            scenario.dt_config(&built, true)?,
            &built.specs,
            &scenario.dt_schedule(&built)?,
            &built.policy,
        ),
    };
    match result {
        Ok(trace) => Ok(RunOutcome {
            certificate,
            trace: Some(trace),
            failure: None,
        }),
        Err(EngineError::Divergence { step, time }) => Ok(RunOutcome {
            certificate,
            trace: None,
            failure: Some(format!(
                "diverged at step {step} (t = {time}); last good step {}",
                step.saturating_sub(1)
            )),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Flat metrics document: run parameters next to [`RunMetrics`] keys.
pub fn metrics_document(scenario: &Scenario, mode: Mode, m: &RunMetrics) -> Value {
    let mut v = serde_json::to_value(m).expect("metrics serialize");
    let extra = json!({
        "mode": mode.name(),
        "alpha": scenario.alpha,
        "beta": scenario.beta,
        "delta": if mode == Mode::Dt { scenario.delta } else { None },
        "h": if mode == Mode::Ct { Some(scenario.h) } else { None },
        "seed": scenario.seed,
        "trigger": trigger_name(scenario.trigger),
        "dt_index": match scenario.dt_index {
            IndexFormula::Printed => "printed",
            IndexFormula::WorstCase => "worst-case",
        },
    });
    let obj = v.as_object_mut().expect("metrics is an object");
    for (k, val) in extra.as_object().expect("object") {
        obj.insert(k.clone(), val.clone());
    }
    v
}

fn trigger_name(t: TriggerMode) -> &'static str {
    match t {
        TriggerMode::Exact => "exact",
        TriggerMode::Practical => "practical",
        TriggerMode::Bypass => "bypass",
    }
}

pub fn cmd_run(scenario: &Scenario, mode: Mode, force: bool, out: &Path) -> Result<bool> {
    let outcome = simulate(scenario, mode, force)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("certificate.txt"), &outcome.certificate.text)?;
    if !outcome.certificate.passed && !force {
        print!("{}", outcome.certificate.text);
        eprintln!("error: parameters are not certified; rerun with --force to simulate anyway");
        return Ok(false);
    }
    if let Some(msg) = outcome.failure {
        eprintln!("error: {msg}");
        return Ok(false);
    }
    let trace = outcome.trace.expect("completed run has a trace");
    let file = File::create(out.join("trace.csv"))?;
    trace.write_csv(BufWriter::new(file)).context("writing trace.csv")?;
    let doc = metrics_document(scenario, mode, &trace.metrics);
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    let m = &trace.metrics;
    println!(
        "{} run: final error {:.3e}, consensus gap {:.3e}, triggers {} (comm ratio {:.4}), lyapunov violations {}",
        mode.name(),
        m.final_error,
        m.consensus_gap,
        m.total_triggers,
        m.comm_ratio,
        m.lyapunov_violations
    );
    println!("wrote {}", out.display());
    Ok(true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub beta: f64,
    pub delta: Option<f64>,
    pub status: &'static str,
    pub metrics: Option<RunMetrics>,
    pub note: String,
}

/// Cartesian grid over the supplied axes; empty when no axis is supplied.
pub fn sweep_grid(
    scenario: &Scenario,
    mode: Mode,
    betas: Option<&[f64]>,
    deltas: Option<&[f64]>,
) -> Result<Vec<(f64, Option<f64>)>> {
    if mode == Mode::Ct && deltas.is_some() {
        bail!("a delta grid only applies to discrete-time sweeps");
    }
    if betas.is_none() && deltas.is_none() {
        return Ok(Vec::new());
    }
    let beta_axis = betas.map_or_else(|| vec![scenario.beta], <[f64]>::to_vec);
    let delta_axis: Vec<Option<f64>> = match (mode, deltas) {
        (Mode::Ct, _) => vec![None],
        (Mode::Dt, Some(d)) => d.iter().copied().map(Some).collect(),
        (Mode::Dt, None) => vec![Some(scenario.require_delta()?)],
    };
    let mut grid = Vec::with_capacity(beta_axis.len() * delta_axis.len());
    for &b in &beta_axis {
        for &d in &delta_axis {
            grid.push((b, d));
        }
    }
    Ok(grid)
}

pub fn sweep(scenario: &Scenario, mode: Mode, grid: &[(f64, Option<f64>)]) -> Result<Vec<SweepRow>> {
    // validate once so per-point errors are only about the swept values
    scenario.build()?;
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(index, &(beta, delta))| {
            let mut s = scenario.clone();
            s.beta = beta;
            if delta.is_some() {
                s.delta = delta;
            }
            s.record_every = u64::MAX;
            let row = |status, metrics, note| SweepRow {
                index,
                beta,
                delta,
                status,
                metrics,
                note,
            };
            match simulate(&s, mode, false) {
                Ok(o) if !o.certificate.passed => {
                    let first = o
                        .certificate
                        .ct_violations
                        .iter()
                        .chain(&o.certificate.dt_violations)
                        .next()
                        .map_or_else(|| "graph assumptions fail".to_string(), |v| v.to_string());
                    row("skipped", None, first)
                }
                Ok(o) => match o.failure {
                    Some(msg) => row("diverged", None, msg),
                    None => row("ok", o.trace.map(|t| t.metrics), String::new()),
                },
                Err(e) => row("skipped", None, format!("{e:#}")),
            }
        })
        .collect();
    Ok(rows)
}

pub fn write_sweep_table<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index",
        "beta",
        "delta",
        "status",
        "final_error",
        "consensus_gap",
        "total_triggers",
        "comm_ratio",
        "lyapunov_violations",
        "note",
    ])?;
    for r in rows {
        let m = r.metrics.as_ref();
        let f = |g: fn(&RunMetrics) -> String| m.map_or_else(String::new, g);
        w.write_record([
            r.index.to_string(),
            r.beta.to_string(),
            r.delta.map_or_else(String::new, |d| d.to_string()),
            r.status.to_string(),
            f(|m| m.final_error.to_string()),
            f(|m| m.consensus_gap.to_string()),
            f(|m| m.total_triggers.to_string()),
            f(|m| m.comm_ratio.to_string()),
            f(|m| m.lyapunov_violations.to_string()),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(
    scenario: &Scenario,
    mode: Mode,
    betas: Option<&[f64]>,
    deltas: Option<&[f64]>,
    out: &Path,
) -> Result<bool> {
    let grid = sweep_grid(scenario, mode, betas, deltas)?;
    let rows = sweep(scenario, mode, &grid)?;
    for r in rows.iter().filter(|r| r.status != "ok") {
        eprintln!(
            "warning: point {} (beta {}, delta {:?}) {}: {}",
            r.index, r.beta, r.delta, r.status, r.note
        );
    }
    let mut table = Vec::new();
    write_sweep_table(&rows, &mut table)?;
    std::io::stdout().write_all(&table)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("sweep.csv"), &table)?;
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Ct,
    Dt,
    All,
}

/// Runs the reference experiments and checks their stated outcomes.
pub fn cmd_reproduce(base: &Scenario, which: Experiment, beta: Option<f64>, force: bool, out: &Path) -> Result<bool> {
    let mut ok = true;
    if which != Experiment::Dt {
        let mut s = base.clone();
        if let Some(b) = beta {
            s.beta = b;
        }
        s.record_every = 100;
        let dir = out.join("ct");
        ok &= cmd_run(&s, Mode::Ct, force, &dir)?;
        ok &= check_run(&dir, "ct")?;
    }
    if which != Experiment::Ct {
        let betas: Vec<f64> = beta.map_or_else(|| REPRODUCE_DT_BETAS.to_vec(), |b| vec![b]);
        let mut counts = Vec::new();
        for b in &betas {
            let mut s = base.clone();
            s.beta = *b;
            let dir = out.join(format!("dt-beta-{b}"));
            let ran = cmd_run(&s, Mode::Dt, force, &dir)?;
            ok &= ran;
            if ran {
                ok &= check_run(&dir, &format!("dt beta {b}"))?;
                let doc: Value = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json"))?)?;
                counts.push((*b, doc["total_triggers"].as_u64().unwrap_or(0)));
            }
        }
        if counts.len() >= 2 {
            let monotone = counts.windows(2).all(|w| w[1].1 > w[0].1);
            let listing: Vec<String> = counts.iter().map(|(b, c)| format!("beta {b}: {c}")).collect();
            println!(
                "trigger counts {}; larger beta triggers more often: {}",
                listing.join(", "),
                if monotone { "yes" } else { "no" }
            );
            ok &= monotone;
        }
    }
    Ok(ok)
}

fn check_run(dir: &Path, label: &str) -> Result<bool> {
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json"))?)?;
    let err = doc["final_error"].as_f64().unwrap_or(f64::INFINITY);
    let viol = doc["lyapunov_violations"].as_u64().unwrap_or(u64::MAX);
    let pass = err <= REPRODUCE_ERROR_TOL && viol == 0;
    println!(
        "{label}: final error {err:.3e} (limit {REPRODUCE_ERROR_TOL:e}), lyapunov violations {viol}: {}",
        if pass { "reproduced" } else { "NOT reproduced" }
    );
    Ok(pass)
}
