//! IFP indices, stepsize and coupling-gain bounds, and the 2x2 certificate
//! behind the discrete-time index.
//!
//! Conventions: indices are returned with their sign (`nu <= 0`); gain
//! conditions take magnitudes `|nu|`. Coupling-gain bounds are open-interval
//! suprema: a gain equal to the supremum is rejected.

use serde::Serialize;

use crate::objective::ObjectiveSpec;

/// Tolerance of the trace/determinant semidefiniteness test.
pub const SEMIDEFINITE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PassivityError {
    #[error("{0}")]
    Domain(String),
    #[error("stepsize {delta} is not below the bound {bound} (agent {agent})")]
    StepsizeTooLarge { agent: usize, delta: f64, bound: f64 },
}

fn positive(name: &str, v: f64) -> Result<(), PassivityError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PassivityError::Domain(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn moduli(mu: f64, lip: f64) -> Result<(), PassivityError> {
    positive("mu", mu)?;
    if lip >= mu && lip.is_finite() {
        Ok(())
    } else {
        Err(PassivityError::Domain(format!(
            "need lip >= mu, got mu = {mu}, lip = {lip}"
        )))
    }
}

/// Continuous-time IFP index `-1 / (alpha mu)^2`.
pub fn ifp_index_ct(alpha: f64, mu: f64) -> Result<f64, PassivityError> {
    positive("alpha", alpha)?;
    positive("mu", mu)?;
    Ok(-1.0 / (alpha * alpha * mu * mu))
}

/// Per-agent forward-Euler stepsize bound `(4l - 2mu) / (alpha (2l^2 - mu^2))`.
pub fn max_stepsize(alpha: f64, mu: f64, lip: f64) -> Result<f64, PassivityError> {
    positive("alpha", alpha)?;
    moduli(mu, lip)?;
    Ok((4.0 * lip - 2.0 * mu) / (alpha * (2.0 * lip * lip - mu * mu)))
}

/// Denominator of the printed discrete-time index; positive iff the
/// stepsize is below [`max_stepsize`].
fn dt_denominator(alpha: f64, delta: f64, mu: f64, lip: f64) -> f64 {
    alpha * delta * (mu / 2.0 - lip * lip / mu) + 2.0 * lip / mu - 1.0
}

fn check_delta(alpha: f64, delta: f64, mu: f64, lip: f64) -> Result<(), PassivityError> {
    positive("alpha", alpha)?;
    moduli(mu, lip)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(PassivityError::Domain(format!("stepsize must be >= 0, got {delta}")));
    }
    if dt_denominator(alpha, delta, mu, lip) <= 0.0 {
        return Err(PassivityError::StepsizeTooLarge {
            agent: 0,
            delta,
            bound: max_stepsize(alpha, mu, lip)?,
        });
    }
    Ok(())
}

/// Discrete-time IFP index, default closed form:
///
/// ```text
/// -(1/(alpha mu) + delta (1/2 + l/mu))^2 / (alpha delta (mu/2 - l^2/mu) + 2l/mu - 1)
/// ```
///
/// This bounds the curvature-dependent block of the dissipation matrix at
/// `B = l` only. For `l > mu` and `alpha delta (l + mu) < 2` the binding case
/// is `B = mu`, and the form also omits a `delta/(alpha mu) |u|^2` term, so
/// the value can be optimistic; see [`ifp_index_dt_worst_case`].
pub fn ifp_index_dt(alpha: f64, delta: f64, mu: f64, lip: f64) -> Result<f64, PassivityError> {
    check_delta(alpha, delta, mu, lip)?;
    let num = 1.0 / (alpha * mu) + delta * (0.5 + lip / mu);
    Ok(-(num * num) / dt_denominator(alpha, delta, mu, lip))
}

/// Smallest-magnitude index for which the one-step storage inequality holds
/// for every curvature `B` in `[mu, l]`.
///
/// The one-step storage difference is `[z;u]' M(B) [z;u] + dx'u + delta/(alpha mu) |u|^2`
/// with scalar blocks (per eigenvalue `b` of `B`)
///
/// ```text
/// m11(b) = (alpha delta / mu) b^2 - (2/mu) b + 1 - alpha delta mu / 2
/// m12(b) = -(1/(alpha mu) + delta/2) + delta b / mu
/// ```
///
/// so the index is `-(max_b m12(b)^2 / -m11(b) + delta/(alpha mu))`. The ratio
/// has a single interior stationary point, checked alongside the endpoints.
/// As `delta -> 0` this tends to the continuous-time index.
pub fn ifp_index_dt_worst_case(alpha: f64, delta: f64, mu: f64, lip: f64) -> Result<f64, PassivityError> {
    check_delta(alpha, delta, mu, lip)?;
    let a0 = 1.0 / (alpha * mu) + delta / 2.0;
    let c0 = 1.0 - alpha * delta * mu / 2.0;
    let m11 = |b: f64| (alpha * delta / mu) * b * b - (2.0 / mu) * b + c0;
    let m12 = |b: f64| a0 - delta * b / mu;
    let ratio = |b: f64| m12(b).powi(2) / -m11(b);
    let mut worst = ratio(mu).max(ratio(lip));
    if delta > 0.0 {
        let b_star = 2.0 * (a0 - delta * c0) / (alpha * delta * delta);
        if b_star > mu && b_star < lip {
            worst = worst.max(ratio(b_star));
        }
    }
    Ok(-(worst + delta / (alpha * mu)))
}

/// Which closed form supplies the discrete-time index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexFormula {
    /// [`ifp_index_dt`].
    #[default]
    Printed,
    /// [`ifp_index_dt_worst_case`].
    WorstCase,
}

impl IndexFormula {
    pub fn dt_index(self, alpha: f64, delta: f64, mu: f64, lip: f64) -> Result<f64, PassivityError> {
        match self {
            IndexFormula::Printed => ifp_index_dt(alpha, delta, mu, lip),
            IndexFormula::WorstCase => ifp_index_dt_worst_case(alpha, delta, mu, lip),
        }
    }
}

/// `|nu_i| * beta * d_i < 1/2` for every agent.
pub fn gain_condition(index_magnitudes: &[f64], beta: f64, max_in_degree: &[f64]) -> bool {
    index_magnitudes
        .iter()
        .zip(max_in_degree)
        .all(|(nu, d)| nu * beta * d < 0.5)
}

/// Supremum of admissible coupling gains, `min_i 1 / (2 |nu_i| d_i)`.
/// Infinite when no agent constrains the gain.
pub fn beta_supremum(index_magnitudes: &[f64], max_in_degree: &[f64]) -> f64 {
    index_magnitudes
        .iter()
        .zip(max_in_degree)
        .map(|(nu, d)| agent_beta_supremum(*nu, *d))
        .fold(f64::INFINITY, f64::min)
}

fn agent_beta_supremum(nu_mag: f64, d: f64) -> f64 {
    let p = nu_mag * d;
    if p > 0.0 {
        0.5 / p
    } else {
        f64::INFINITY
    }
}

/// Continuous-time design with `alpha` fixed: supremum of admissible `beta`.
pub fn design_beta_ct(alpha: f64, mus: &[f64], max_in_degree: &[f64]) -> Result<f64, PassivityError> {
    let nus = mus
        .iter()
        .map(|&mu| ifp_index_ct(alpha, mu).map(f64::abs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(beta_supremum(&nus, max_in_degree))
}

/// Continuous-time design with `beta` fixed: infimum of admissible `alpha`,
/// `max_i sqrt(2 beta d_i) / mu_i`.
pub fn design_alpha_ct(beta: f64, mus: &[f64], max_in_degree: &[f64]) -> Result<f64, PassivityError> {
    positive("beta", beta)?;
    let mut inf: f64 = 0.0;
    for (&mu, &d) in mus.iter().zip(max_in_degree) {
        positive("mu", mu)?;
        inf = inf.max((2.0 * beta * d).sqrt() / mu);
    }
    Ok(inf)
}

/// Discrete-time design with `alpha` and `delta` fixed: supremum of `beta`.
pub fn design_beta_dt(
    alpha: f64,
    delta: f64,
    specs: &[ObjectiveSpec],
    max_in_degree: &[f64],
    formula: IndexFormula,
) -> Result<f64, PassivityError> {
    let nus = specs
        .iter()
        .map(|s| {
            formula
                .dt_index(alpha, delta, s.mu, s.lip)
                .map(f64::abs)
                .map_err(|e| match e {
                    PassivityError::StepsizeTooLarge { delta, bound, .. } => PassivityError::StepsizeTooLarge {
                        agent: s.id,
                        delta,
                        bound,
                    },
                    other => other,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(beta_supremum(&nus, max_in_degree))
}

/// A symmetric 2x2 matrix with its semidefiniteness verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate2x2 {
    pub matrix: [[f64; 2]; 2],
    pub trace: f64,
    pub det: f64,
    pub negative_semidefinite: bool,
}

impl Certificate2x2 {
    pub fn from_entries(m11: f64, m12: f64, m22: f64) -> Self {
        let trace = m11 + m22;
        let det = m11 * m22 - m12 * m12;
        Certificate2x2 {
            matrix: [[m11, m12], [m12, m22]],
            trace,
            det,
            negative_semidefinite: trace <= SEMIDEFINITE_TOL && det >= -SEMIDEFINITE_TOL,
        }
    }
}

/// The curvature-free 2x2 bound whose semidefiniteness yields the printed
/// discrete-time index:
///
/// ```text
/// [[alpha delta l^2/mu - 2l/mu + 1 - alpha delta mu/2,  1/(alpha mu) + delta/2 + delta l/mu],
///  [.,                                                   nu]]
/// ```
pub fn dt_passivity_certificate(alpha: f64, delta: f64, mu: f64, lip: f64, nu: f64) -> Certificate2x2 {
    let m11 = alpha * delta * lip * lip / mu - 2.0 * lip / mu + 1.0 - alpha * delta * mu / 2.0;
    let m12 = 1.0 / (alpha * mu) + delta / 2.0 + delta * lip / mu;
    Certificate2x2::from_entries(m11, m12, nu)
}

/// Exact dissipation matrix at curvature `b`, with the `delta/(alpha mu)`
/// input term folded into the lower-right entry.
pub fn dt_dissipation_matrix(alpha: f64, delta: f64, mu: f64, b: f64, nu: f64) -> Certificate2x2 {
    let m11 = (alpha * delta / mu) * b * b - (2.0 / mu) * b + 1.0 - alpha * delta * mu / 2.0;
    let m12 = -(1.0 / (alpha * mu) + delta / 2.0) + delta * b / mu;
    Certificate2x2::from_entries(m11, m12, nu + delta / (alpha * mu))
}

/// Per-agent design summary.
#[derive(Clone, Debug, Serialize)]
pub struct PassivityCertificate {
    pub agent: usize,
    pub mu: f64,
    pub lip: f64,
    pub alpha: f64,
    pub nu_ct: f64,
    /// Discrete-time index under the chosen formula, when a stepsize is given
    /// and admissible.
    pub nu_dt: Option<f64>,
    pub delta: Option<f64>,
    pub delta_max: f64,
    pub max_in_degree: f64,
    pub beta_max_ct: f64,
    pub beta_max_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    StepsizeTooLarge { agent: usize, delta: f64, bound: f64 },
    GainTooLarge { agent: usize, beta: f64, supremum: f64 },
    NonPositiveGain { beta: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::StepsizeTooLarge { agent, delta, bound } => write!(
                f,
                "stepsize {delta} is not below the bound {bound:.4} of agent {}",
                agent + 1
            ),
            Violation::GainTooLarge { agent, beta, supremum } => write!(
                f,
                "coupling gain {beta} is not below the supremum {supremum:.4} of agent {}",
                agent + 1
            ),
            Violation::NonPositiveGain { beta } => write!(f, "coupling gain must be positive, got {beta}"),
        }
    }
}

/// Certificates for a whole network plus the binding network-level bounds.
#[derive(Clone, Debug, Serialize)]
pub struct NetworkCertificate {
    pub alpha: f64,
    pub delta: Option<f64>,
    pub formula: IndexFormula,
    pub agents: Vec<PassivityCertificate>,
    /// `min_i delta_max_i`.
    pub delta_max: f64,
    pub beta_sup_ct: f64,
    pub beta_sup_dt: Option<f64>,
}

impl NetworkCertificate {
    pub fn certify(
        specs: &[ObjectiveSpec],
        max_in_degree: &[f64],
        alpha: f64,
        delta: Option<f64>,
        formula: IndexFormula,
    ) -> Result<Self, PassivityError> {
        if specs.len() != max_in_degree.len() {
            return Err(PassivityError::Domain(format!(
                "{} objectives but {} degree bounds",
                specs.len(),
                max_in_degree.len()
            )));
        }
        let mut agents = Vec::with_capacity(specs.len());
        for (k, (s, &d)) in specs.iter().zip(max_in_degree).enumerate() {
            let nu_ct = ifp_index_ct(alpha, s.mu)?;
            let delta_max = max_stepsize(alpha, s.mu, s.lip)?;
            let nu_dt = match delta {
                Some(dl) => match formula.dt_index(alpha, dl, s.mu, s.lip) {
                    Ok(v) => Some(v),
                    Err(PassivityError::StepsizeTooLarge { .. }) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            agents.push(PassivityCertificate {
                agent: k,
                mu: s.mu,
                lip: s.lip,
                alpha,
                nu_ct,
                nu_dt,
                delta,
                delta_max,
                max_in_degree: d,
                beta_max_ct: agent_beta_supremum(nu_ct.abs(), d),
                beta_max_dt: nu_dt.map(|v| agent_beta_supremum(v.abs(), d)),
            });
        }
        let delta_max = agents.iter().map(|a| a.delta_max).fold(f64::INFINITY, f64::min);
        let beta_sup_ct = agents.iter().map(|a| a.beta_max_ct).fold(f64::INFINITY, f64::min);
        let beta_sup_dt = if delta.is_some() && agents.iter().all(|a| a.nu_dt.is_some()) {
            Some(
                agents
                    .iter()
                    .filter_map(|a| a.beta_max_dt)
                    .fold(f64::INFINITY, f64::min),
            )
        } else {
            None
        };
        Ok(NetworkCertificate {
            alpha,
            delta,
            formula,
            agents,
            delta_max,
            beta_sup_ct,
            beta_sup_dt,
        })
    }

    pub fn check_ct(&self, beta: f64) -> Vec<Violation> {
        if !(beta > 0.0) {
            return vec![Violation::NonPositiveGain { beta }];
        }
        self.agents
            .iter()
            .filter(|a| !(beta < a.beta_max_ct))
            .map(|a| Violation::GainTooLarge {
                agent: a.agent,
                beta,
                supremum: a.beta_max_ct,
            })
            .collect()
    }

    pub fn check_dt(&self, beta: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        let delta = self.delta.unwrap_or(f64::NAN);
        for a in &self.agents {
            if !(delta < a.delta_max) {
                out.push(Violation::StepsizeTooLarge {
                    agent: a.agent,
                    delta,
                    bound: a.delta_max,
                });
            }
        }
        if !(beta > 0.0) {
            out.push(Violation::NonPositiveGain { beta });
            return out;
        }
        for a in &self.agents {
            if let Some(sup) = a.beta_max_dt {
                if !(beta < sup) {
                    out.push(Violation::GainTooLarge {
                        agent: a.agent,
                        beta,
                        supremum: sup,
                    });
                }
            }
        }
        out
    }

    pub fn nu_ct_magnitudes(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.nu_ct.abs()).collect()
    }

    /// Discrete-time magnitudes; `None` if some agent has no admissible index.
    pub fn nu_dt_magnitudes(&self) -> Option<Vec<f64>> {
        self.agents.iter().map(|a| a.nu_dt.map(f64::abs)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const REFERENCE: [(f64, f64); 5] = [(1.0, 1.0), (1.0, 1.0), (1.0, 3.0), (1.0, 2.0), (1.2, 2.41)];

    #[test]
    fn ct_index_values() {
        assert_eq!(ifp_index_ct(1.0, 1.0).unwrap(), -1.0);
        assert_abs_diff_eq!(
            ifp_index_ct(1.0, 1.2).unwrap(),
            -0.694_444_444_444_444_4,
            epsilon = 1e-15
        );
        assert_eq!(ifp_index_ct(2.0, 1.0).unwrap(), -0.25);
        assert!(ifp_index_ct(0.0, 1.0).is_err());
        assert!(ifp_index_ct(1.0, -1.0).is_err());
    }

    #[test]
    fn stepsize_bounds() {
        let expect = [2.0, 2.0, 10.0 / 17.0, 6.0 / 7.0, 7.24 / 10.1762];
        for ((mu, l), e) in REFERENCE.iter().zip(expect) {
            assert_abs_diff_eq!(max_stepsize(1.0, *mu, *l).unwrap(), e, epsilon = 1e-12);
            assert_abs_diff_eq!(max_stepsize(2.0, *mu, *l).unwrap(), e / 2.0, epsilon = 1e-12);
        }
        let min = REFERENCE
            .iter()
            .map(|(m, l)| max_stepsize(1.0, *m, *l).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(min, 0.5882, epsilon = 1e-4);
        assert!(max_stepsize(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn printed_dt_index_values() {
        let got: Vec<f64> = REFERENCE
            .iter()
            .map(|(m, l)| ifp_index_dt(1.0, 0.1, *m, *l).unwrap())
            .collect();
        // closed-form plug-ins
        assert_abs_diff_eq!(got[0], -1.3225 / 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(got[2], -1.8225 / 4.15, epsilon = 1e-12);
        assert_abs_diff_eq!(got[3], -1.5625 / 2.65, epsilon = 1e-12);
        for (g, p) in got.iter().zip([-1.39, -1.39, -0.44, -0.59, -0.45]) {
            assert!((g - p).abs() <= 0.005, "{g} vs {p}");
        }
    }

    #[test]
    fn stepsize_at_bound_is_rejected() {
        let bound = max_stepsize(1.0, 1.0, 3.0).unwrap();
        assert!(matches!(
            ifp_index_dt(1.0, bound, 1.0, 3.0),
            Err(PassivityError::StepsizeTooLarge { .. })
        ));
        assert!(matches!(
            ifp_index_dt(1.0, 0.6, 1.0, 3.0),
            Err(PassivityError::StepsizeTooLarge { .. })
        ));
        assert!(ifp_index_dt(1.0, bound * 0.999, 1.0, 3.0).is_ok());
        assert!(ifp_index_dt_worst_case(1.0, 0.6, 1.0, 3.0).is_err());
    }

    #[test]
    fn gain_bounds() {
        let d = [1.0; 5];
        let ct: Vec<f64> = REFERENCE
            .iter()
            .map(|(m, _)| ifp_index_ct(1.0, *m).unwrap().abs())
            .collect();
        assert_eq!(beta_supremum(&ct, &d), 0.5);
        let dt: Vec<f64> = REFERENCE
            .iter()
            .map(|(m, l)| ifp_index_dt(1.0, 0.1, *m, *l).unwrap().abs())
            .collect();
        assert_abs_diff_eq!(beta_supremum(&dt, &d), 0.359_168, epsilon = 1e-5);
        assert!(gain_condition(&ct, 0.0, &d));
        assert!(gain_condition(&ct, 0.2, &d));
        assert!(!gain_condition(&ct, 0.5, &d));
        assert!(gain_condition(&dt, 0.3, &d));
        assert!(!gain_condition(&dt, 0.36, &d));
        assert_eq!(beta_supremum(&ct, &[0.0; 5]), f64::INFINITY);
    }

    #[test]
    fn design_helpers_are_consistent() {
        let mus = [1.0, 1.0, 1.0, 1.0, 1.2];
        let d = [1.0; 5];
        assert_eq!(design_beta_ct(1.0, &mus, &d).unwrap(), 0.5);
        let a = design_alpha_ct(0.5, &mus, &d).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
        // just above the infimum the gain condition holds
        let b = design_beta_ct(a * 1.001, &mus, &d).unwrap();
        assert!(b > 0.5);
    }

    #[test]
    fn certificate_at_printed_index_is_boundary() {
        let nu = ifp_index_dt(1.0, 0.1, 1.0, 1.0).unwrap();
        let c = dt_passivity_certificate(1.0, 0.1, 1.0, 1.0, nu);
        assert_abs_diff_eq!(c.matrix[0][0], -0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix[0][1], 1.15, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix[1][1], -1.392_105, epsilon = 1e-6);
        assert_abs_diff_eq!(c.det, 0.0, epsilon = 1e-12);
        assert!(c.negative_semidefinite);
        let off = dt_passivity_certificate(1.0, 0.1, 1.0, 1.0, nu + 0.01);
        assert!(off.det < 0.0);
        assert!(!off.negative_semidefinite);
    }

    #[test]
    fn zero_stepsize_certificate_is_the_ct_matrix() {
        let (alpha, mu, l) = (1.3, 0.8, 2.0);
        let nu = ifp_index_ct(alpha, mu).unwrap();
        let c = dt_passivity_certificate(alpha, 0.0, mu, l, nu);
        assert_abs_diff_eq!(c.matrix[0][0], 1.0 - 2.0 * l / mu, epsilon = 1e-15);
        assert_abs_diff_eq!(c.matrix[0][1], 1.0 / (alpha * mu), epsilon = 1e-15);
        assert_eq!(c.matrix[1][1], nu);
    }

    #[test]
    fn printed_index_limit_only_matches_ct_when_l_equals_mu() {
        for (mu, l) in REFERENCE {
            let dt = ifp_index_dt(1.0, 1e-8, mu, l).unwrap();
            let ct = ifp_index_ct(1.0, mu).unwrap();
            // limit of the printed form is ct / (2l/mu - 1)
            assert_abs_diff_eq!(dt, ct / (2.0 * l / mu - 1.0), epsilon = 1e-6);
            if mu == l {
                assert!((dt - ct).abs() <= 1e-4 * ct.abs());
            }
        }
    }

    #[test]
    fn worst_case_index_recovers_ct_limit() {
        for (mu, l) in REFERENCE {
            let dt = ifp_index_dt_worst_case(1.0, 1e-8, mu, l).unwrap();
            let ct = ifp_index_ct(1.0, mu).unwrap();
            assert!((dt - ct).abs() <= 1e-4 * ct.abs(), "{dt} {ct}");
        }
        let wc: Vec<f64> = REFERENCE
            .iter()
            .map(|(m, l)| ifp_index_dt_worst_case(1.0, 0.1, *m, *l).unwrap())
            .collect();
        assert_abs_diff_eq!(wc[0], -1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(wc[2], -1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(wc[4], -(0.736_111_111_111_111), epsilon = 1e-12);
    }

    /// Dense sweep over curvatures; independent of the stationary-point formula.
    fn worst_case_by_sampling(alpha: f64, delta: f64, mu: f64, l: f64) -> f64 {
        let n = 20_000;
        let mut worst: f64 = 0.0;
        for k in 0..=n {
            let b = mu + (l - mu) * k as f64 / n as f64;
            let m11 = (alpha * delta / mu) * b * b - (2.0 / mu) * b + 1.0 - alpha * delta * mu / 2.0;
            let m12 = -(1.0 / (alpha * mu) + delta / 2.0) + delta * b / mu;
            worst = worst.max(m12 * m12 / -m11);
        }
        -(worst + delta / (alpha * mu))
    }

    #[test]
    fn worst_case_matches_dense_sampling_near_bound() {
        let (alpha, mu, l) = (1.0, 1.0, 1.5);
        let delta = 0.95 * max_stepsize(alpha, mu, l).unwrap();
        let closed = ifp_index_dt_worst_case(alpha, delta, mu, l).unwrap();
        let sampled = worst_case_by_sampling(alpha, delta, mu, l);
        assert!((closed - sampled).abs() <= 1e-6 * closed.abs());
    }

    #[test]
    fn network_certificate_reference() {
        let specs = crate::defaults::reference_objectives();
        let cert = NetworkCertificate::certify(&specs, &[1.0; 5], 1.0, Some(0.1), IndexFormula::Printed).unwrap();
        assert_eq!(cert.beta_sup_ct, 0.5);
        assert_abs_diff_eq!(cert.beta_sup_dt.unwrap(), 0.3592, epsilon = 1e-3);
        assert_abs_diff_eq!(cert.delta_max, 0.5882, epsilon = 1e-3);
        assert!(cert.check_ct(0.2).is_empty());
        assert_eq!(cert.check_ct(0.5).len(), 4);
        assert!(cert.check_dt(0.1).is_empty());
        assert!(cert.check_dt(0.3).is_empty());
        assert!(!cert.check_dt(0.36).is_empty());

        let cert = NetworkCertificate::certify(&specs, &[1.0; 5], 1.0, Some(0.6), IndexFormula::Printed).unwrap();
        let v = cert.check_dt(0.1);
        assert_eq!(
            v[0],
            Violation::StepsizeTooLarge {
                agent: 2,
                delta: 0.6,
                bound: 10.0 / 17.0
            }
        );
        assert!(cert.beta_sup_dt.is_none());
    }

    fn valid_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (0.5f64..2.0, 0.5f64..2.0, 1.0f64..4.0, 0.0f64..0.9).prop_map(|(alpha, mu, ratio, frac)| {
            let l = mu * ratio;
            let delta = frac * max_stepsize(alpha, mu, l).unwrap();
            (alpha, delta.max(1e-6), mu, l)
        })
    }

    proptest! {
        #[test]
        fn printed_index_is_determinant_tight((alpha, delta, mu, l) in valid_params()) {
            let nu = ifp_index_dt(alpha, delta, mu, l).unwrap();
            let c = dt_passivity_certificate(alpha, delta, mu, l, nu);
            prop_assert!(c.det.abs() <= 1e-9);
            prop_assert!(c.negative_semidefinite);
            prop_assert!(!dt_passivity_certificate(alpha, delta, mu, l, nu + 1e-3).negative_semidefinite);
        }

        #[test]
        fn worst_case_index_certifies_every_curvature((alpha, delta, mu, l) in valid_params(), t in 0.0f64..=1.0) {
            let nu = ifp_index_dt_worst_case(alpha, delta, mu, l).unwrap();
            let b = mu + t * (l - mu);
            prop_assert!(dt_dissipation_matrix(alpha, delta, mu, b, nu).negative_semidefinite);
            let sampled = worst_case_by_sampling(alpha, delta, mu, l);
            prop_assert!(nu <= sampled + 1e-9 * sampled.abs());
            prop_assert!((nu - sampled).abs() <= 1e-6 * sampled.abs());
        }

        #[test]
        fn printed_index_grows_with_stepsize(k in 1usize..99) {
            for (mu, l) in REFERENCE {
                let bound = max_stepsize(1.0, mu, l).unwrap();
                let d0 = bound * k as f64 / 100.0;
                let d1 = bound * (k + 1) as f64 / 100.0;
                let a = ifp_index_dt(1.0, d0, mu, l).unwrap().abs();
                let b = ifp_index_dt(1.0, d1, mu, l).unwrap().abs();
                prop_assert!(b > a);
            }
        }
    }
}
