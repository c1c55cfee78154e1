//! Plain-text certificate for a scenario.

use std::fmt::Write;

use anyhow::Result;
use ifpopt_core::graph::GraphSchedule;
use ifpopt_core::passivity::Violation;
use ifpopt_core::NetworkCertificate;

use crate::scenario::{Built, Scenario};

/// Which conditions a report must cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Ct,
    Dt,
    Both,
}

pub struct Certificate {
    pub text: String,
    pub passed: bool,
    pub network: NetworkCertificate,
    pub ct_violations: Vec<Violation>,
    pub dt_violations: Vec<Violation>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

pub fn certify(scenario: &Scenario, built: &Built, scope: Scope) -> Result<Certificate> {
    let schedule: GraphSchedule = scenario.ct_schedule(built)?;
    let d_max = schedule.max_in_degrees();
    let delta = match scope {
        Scope::Ct => None,
        Scope::Dt => Some(scenario.require_delta()?),
        Scope::Both => scenario.delta,
    };
    let network = NetworkCertificate::certify(&built.specs, &d_max, scenario.alpha, delta, scenario.dt_index)?;

    let mut t = String::new();
    let delta_txt = delta.map_or_else(|| "-".to_string(), |d| d.to_string());
    writeln!(
        t,
        "agents {}, alpha {}, beta {}, delta {delta_txt}, dt index {}",
        built.specs.len(),
        scenario.alpha,
        scenario.beta,
        match scenario.dt_index {
            ifpopt_core::IndexFormula::Printed => "printed",
            ifpopt_core::IndexFormula::WorstCase => "worst-case",
        }
    )?;
    writeln!(
        t,
        "{:<6}{:<16}{:>10}{:>10}{:>12}{:>12}{:>12}{:>13}{:>13}{:>7}",
        "agent", "objective", "mu", "l", "nu_ct", "nu_dt", "delta_max", "beta_max_ct", "beta_max_dt", "d_in"
    )?;
    for (a, spec) in network.agents.iter().zip(&built.specs) {
        writeln!(
            t,
            "{:<6}{:<16}{:>10.4}{:>10.4}{:>12.6}{:>12}{:>12.6}{:>13.6}{:>13}{:>7}",
            a.agent + 1,
            spec.kind.to_string(),
            a.mu,
            a.lip,
            a.nu_ct,
            opt(a.nu_dt),
            a.delta_max,
            a.beta_max_ct,
            opt(a.beta_max_dt),
            a.max_in_degree
        )?;
    }
    writeln!(
        t,
        "network: delta bound {:.6}, beta supremum ct {:.6}, dt {}",
        network.delta_max,
        network.beta_sup_ct,
        opt(network.beta_sup_dt)
    )?;

    let mut passed = true;
    match schedule.check_ujsc() {
        Ok(w) => writeln!(
            t,
            "graph: weight-balanced in every mode, jointly strongly connected over {w} consecutive mode(s)"
        )?,
        Err(e) => {
            passed = false;
            writeln!(t, "graph: FAIL: {e}")?;
        }
    }

    let ct_violations = if scope != Scope::Dt {
        network.check_ct(scenario.beta)
    } else {
        Vec::new()
    };
    let dt_violations = if delta.is_some() {
        network.check_dt(scenario.beta)
    } else {
        Vec::new()
    };
    if scope != Scope::Dt {
        passed &= section(&mut t, "continuous-time", &ct_violations)?;
    }
    if delta.is_some() {
        passed &= section(&mut t, "discrete-time", &dt_violations)?;
    }
    writeln!(t, "verdict: {}", if passed { "certified" } else { "NOT certified" })?;
    Ok(Certificate {
        text: t,
        passed,
        network,
        ct_violations,
        dt_violations,
    })
}

fn section(t: &mut String, name: &str, violations: &[Violation]) -> Result<bool> {
    if violations.is_empty() {
        writeln!(t, "{name}: ok")?;
        return Ok(true);
    }
    for v in violations {
        writeln!(t, "{name}: FAIL: {v}")?;
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ifpopt_core::passivity::{beta_supremum, ifp_index_ct, ifp_index_dt, max_stepsize};

    #[test]
    fn reference_certificate() {
        let s = Scenario::reference();
        let b = s.build().unwrap();
        let c = certify(&s, &b, Scope::Both).unwrap();
        assert!(c.passed, "{}", c.text);
        assert_eq!(c.network.beta_sup_ct, 0.5);
        assert!(c.text.contains("-1.392105"));
        assert!(c.text.contains("-0.439157"));
        assert!(c.text.contains("delta bound 0.588235"));
        assert!(c.text.contains("verdict: certified"));
    }

    #[test]
    fn verdicts_match_pure_functions() {
        for (beta, delta) in [
            (0.2, 0.1),
            (0.35, 0.1),
            (0.36, 0.1),
            (0.49, 0.05),
            (0.5, 0.1),
            (0.1, 0.58),
            (0.1, 0.6),
        ] {
            let mut s = Scenario::reference();
            s.beta = beta;
            s.delta = Some(delta);
            let b = s.build().unwrap();
            let c = certify(&s, &b, Scope::Both).unwrap();
            let d = vec![1.0; 5];
            let nu_ct: Vec<f64> = b.specs.iter().map(|p| ifp_index_ct(1.0, p.mu).unwrap().abs()).collect();
            let ct_ok = beta < beta_supremum(&nu_ct, &d);
            let step_ok = b.specs.iter().all(|p| delta < max_stepsize(1.0, p.mu, p.lip).unwrap());
            let dt_ok = step_ok && {
                let nu: Vec<f64> = b
                    .specs
                    .iter()
                    .map(|p| ifp_index_dt(1.0, delta, p.mu, p.lip).unwrap().abs())
                    .collect();
                beta < beta_supremum(&nu, &d)
            };
            assert_eq!(c.passed, ct_ok && dt_ok, "beta {beta} delta {delta}\n{}", c.text);
        }
    }

    #[test]
    fn oversized_stepsize_cites_the_bound() {
        let mut s = Scenario::reference();
        s.delta = Some(0.6);
        let b = s.build().unwrap();
        let c = certify(&s, &b, Scope::Both).unwrap();
        assert!(!c.passed);
        assert!(c.text.contains("not below the bound 0.5882 of agent 3"), "{}", c.text);
    }
}
