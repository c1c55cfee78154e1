//! Event-triggered broadcasting.
//!
//! Agent `i` re-broadcasts when `|x_i - xhat_i|^2` reaches
//!
//! ```text
//! c_i / d_in * (1/2 - |nu_i| beta d_in)^2 * sum_j a_ij |xhat_j - xhat_i|^2
//! ```
//!
//! and only while it has at least one in-neighbor. The practical variant
//! keeps `d_in` out of the squared factor, `(1/2 - beta |nu_i|)^2`, and floors
//! the threshold at `zeta > 0`, trading exact consensus for a minimum error
//! between events.

use serde::{Deserialize, Serialize};

use crate::graph::WeightedDigraph;
use crate::Vector;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TriggerError {
    #[error("trigger constant c[{agent}] = {c} must lie in (0, 1)")]
    BadConstant { agent: usize, c: f64 },
    #[error("zeta must be >= 0 and finite, got {0}")]
    BadFloor(f64),
    #[error("practical triggering needs zeta > 0")]
    MissingFloor,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerMode {
    #[default]
    Exact,
    Practical,
    /// Broadcast every instant; the non-triggered baseline.
    Bypass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriggerPolicy {
    pub c: Vec<f64>,
    pub zeta: f64,
    pub mode: TriggerMode,
}

impl TriggerPolicy {
    pub fn new(c: Vec<f64>, zeta: f64, mode: TriggerMode) -> Result<Self, TriggerError> {
        for (agent, &ci) in c.iter().enumerate() {
            if !(ci > 0.0 && ci < 1.0) {
                return Err(TriggerError::BadConstant { agent, c: ci });
            }
        }
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(TriggerError::BadFloor(zeta));
        }
        if mode == TriggerMode::Practical && zeta == 0.0 {
            return Err(TriggerError::MissingFloor);
        }
        Ok(TriggerPolicy { c, zeta, mode })
    }

    pub fn exact(n: usize, c: f64) -> Result<Self, TriggerError> {
        Self::new(vec![c; n], 0.0, TriggerMode::Exact)
    }

    pub fn practical(n: usize, c: f64, zeta: f64) -> Result<Self, TriggerError> {
        Self::new(vec![c; n], zeta, TriggerMode::Practical)
    }

    pub fn bypass(n: usize) -> Self {
        TriggerPolicy {
            c: vec![0.5; n],
            zeta: 0.0,
            mode: TriggerMode::Bypass,
        }
    }

    /// Threshold for `agent` under this policy's rule.
    pub fn threshold(&self, agent: usize, nu_mag: f64, beta: f64, d_in: f64, gap: f64) -> Threshold {
        let c = self.c[agent];
        match self.mode {
            TriggerMode::Practical => practical_threshold(nu_mag, beta, c, d_in, gap),
            TriggerMode::Exact | TriggerMode::Bypass => trigger_threshold(nu_mag, beta, c, d_in, gap),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    /// No in-neighbors: the agent does not trigger.
    Never,
    Level(f64),
}

impl Threshold {
    pub fn level(self) -> Option<f64> {
        match self {
            Threshold::Never => None,
            Threshold::Level(v) => Some(v),
        }
    }
}

/// `(c / d_in) (1/2 - nu_mag beta d_in)^2 gap`; [`Threshold::Never`] when `d_in = 0`.
pub fn trigger_threshold(nu_mag: f64, beta: f64, c: f64, d_in: f64, gap: f64) -> Threshold {
    if !(d_in > 0.0) {
        return Threshold::Never;
    }
    let margin = 0.5 - nu_mag * beta * d_in;
    Threshold::Level(c / d_in * margin * margin * gap)
}

/// `(c / d_in) (1/2 - beta nu_mag)^2 gap`, the floored variant's base level.
pub fn practical_threshold(nu_mag: f64, beta: f64, c: f64, d_in: f64, gap: f64) -> Threshold {
    if !(d_in > 0.0) {
        return Threshold::Never;
    }
    let margin = 0.5 - beta * nu_mag;
    Threshold::Level(c / d_in * margin * margin * gap)
}

/// Whether the squared sampling error fires an event. Equality fires.
pub fn should_trigger(e_norm_sq: f64, threshold: Threshold, policy: &TriggerPolicy) -> bool {
    match (policy.mode, threshold) {
        (TriggerMode::Bypass, _) => true,
        (_, Threshold::Never) => false,
        (TriggerMode::Exact, Threshold::Level(t)) => e_norm_sq >= t,
        (TriggerMode::Practical, Threshold::Level(t)) => e_norm_sq >= t.max(policy.zeta),
    }
}

/// `sum_j a_ij |xhat_j - xhat_i|^2`.
pub fn neighbor_gap(g: &WeightedDigraph, xhat: &[Vector], i: usize) -> f64 {
    g.in_neighbors(i)
        .map(|(j, w)| w * (&xhat[j] - &xhat[i]).norm_squared())
        .sum()
}

/// Last-broadcast states and per-agent event tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct CommState {
    xhat: Vec<Vector>,
    trigger_counts: Vec<u64>,
}

impl CommState {
    /// Every agent starts having broadcast its initial state.
    pub fn new(x0: &[Vector]) -> Self {
        CommState {
            xhat: x0.to_vec(),
            trigger_counts: vec![0; x0.len()],
        }
    }

    pub fn xhat(&self) -> &[Vector] {
        &self.xhat
    }

    pub fn trigger_counts(&self) -> &[u64] {
        &self.trigger_counts
    }

    pub fn total_triggers(&self) -> u64 {
        self.trigger_counts.iter().sum()
    }

    /// `agent` broadcasts `x`: its sampling error resets to zero.
    pub fn commit_trigger(&mut self, agent: usize, x: &Vector) {
        self.xhat[agent].copy_from(x);
        self.trigger_counts[agent] += 1;
    }

    /// A new link from `sender` hands the receiver the sender's last
    /// broadcast. This is bookkeeping only, not an event.
    pub fn on_link_appearance(&self, sender: usize) -> &Vector {
        &self.xhat[sender]
    }
}
