//! Virtual energy queue and drift-plus-penalty bookkeeping.
//!
//! The queue accumulates propulsion energy spent above the per-slot budget.
//! Keeping it stable enforces the long-run average energy constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueue {
    /// Backlog in joules; never negative.
    pub q: f64,
    /// Energy budget per slot, J.
    pub e_threshold: f64,
    /// Slot duration, s.
    pub slot_duration: f64,
}

impl VirtualQueue {
    pub fn new(e_threshold: f64, slot_duration: f64) -> Self {
        Self { q: 0.0, e_threshold, slot_duration }
    }

    pub fn reset(&mut self) {
        self.q = 0.0;
    }

    /// Energy overspend of one slot, `P Δ − E_th`.
    pub fn excess(&self, power: f64) -> f64 {
        power * self.slot_duration - self.e_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    /// Weight of the rate term against queue drift.
    pub v_weight: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { v_weight: 100.0 }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_weight >= 0.0 && self.v_weight.is_finite()) {
            return Err(Error::Config(format!("lyapunov.v_weight must be non-negative, got {}", self.v_weight)));
        }
        Ok(())
    }
}

pub fn queue_update(queue: &VirtualQueue, power: f64) -> VirtualQueue {
    VirtualQueue { q: (queue.q + queue.excess(power)).max(0.0), ..*queue }
}

pub fn lyapunov_value(queue: &VirtualQueue) -> f64 {
    0.5 * queue.q * queue.q
}

/// Per-slot minimand `Q (P Δ − E_th) − V · mean_rate`. The constant
/// `½ (P Δ − E_th)²` of the drift bound is left out.
pub fn drift_plus_penalty_objective(queue: &VirtualQueue, power: f64, mean_v2u_rate: f64, cfg: &LyapunovConfig) -> f64 {
    queue.q * queue.excess(power) - cfg.v_weight * mean_v2u_rate
}

/// Sample-path inequality `Q(t+1) ≥ Q(t) + P Δ − E_th`.
pub fn single_step_drift_holds(q_before: &VirtualQueue, q_after: &VirtualQueue, power: f64) -> bool {
    q_after.q >= q_before.q + q_before.excess(power)
}

/// One-slot drift bound `(Q(t+1)² − Q(t)²)/2 ≤ Q(t)(P Δ − E_th) + ½(P Δ − E_th)²`.
pub fn quadratic_drift_bound_holds(q_before: &VirtualQueue, q_after: &VirtualQueue, power: f64) -> bool {
    let excess = q_before.excess(power);
    let lhs = (q_after.q * q_after.q - q_before.q * q_before.q) / 2.0;
    let rhs = q_before.q * excess + 0.5 * excess * excess;
    // Equality holds exactly when the max is not binding; allow rounding there.
    lhs <= rhs + 1e-9 * (1.0 + rhs.abs())
}

/// Telescoped sample-path bound over a run:
/// `(1/T) Σ P(t) Δ ≤ E_th + (Q(T+1) − Q(1)) / T`.
pub fn telescoped_bound_holds(energies: &[f64], e_threshold: f64, q_first: f64, q_last: f64) -> bool {
    if energies.is_empty() {
        return true;
    }
    let t = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / t;
    mean <= e_threshold + (q_last - q_first) / t + 1e-9 * (1.0 + mean.abs())
}
