//! Finite-resource system model: how many transmissions compete for the
//! `N_res` resources of each slot, how likely a packet and its
//! retransmissions are scheduled before the deadline, and the resulting
//! packet failure probability. A discrete-event simulator provides an
//! independent estimate.

mod resource;
mod schedule;
mod sim;
mod sweep;

pub use resource::{
    arrival_distribution, conditional_resource_distribution, propagate_resource_distribution,
    retransmission_load_distribution, Conditional, Convergence, PropagationOptions,
    ResourceDistribution,
};
pub use schedule::{
    packet_failure_prob, packet_failure_prob_from, schedule_within_constraint, scheduling_p1,
    scheduling_p1_exact, P1Form, PacketFailure, SchedulingProbs,
};
pub use sim::{simulate_system, SimulationResult, REPLICATIONS, WARMUP_SLOTS};
pub use sweep::{
    binormal_operating_points, fnr_sweep_system, operating_points, total_score, write_sweep_csv,
    SimulationSettings, SweepOptions, SystemSweep, SystemSweepRow,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("invalid system configuration: {0}")]
    Config(String),
    #[error("resource distribution did not converge ({0})")]
    NotConverged(String),
    #[error("total score needs positive entries, found {0}")]
    NonPositive(f64),
    #[error("score table is ragged or empty")]
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_ue: usize,
    pub p_arrival: f64,
    pub n_res: usize,
    /// Latency budget in slots; a transmission counts if it is served at
    /// an offset of at most `t_c - 1` slots after arrival.
    pub t_c: usize,
    pub t_rtt: usize,
    pub n_retx: usize,
    pub p_e: f64,
    pub fnr: f64,
    pub fpr: f64,
}

/// Offered load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Load {
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tti {
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Early,
    Regular,
}

impl SystemConfig {
    /// The reference parameter set: 20 UEs, 10 resources per slot,
    /// arrival probability 0.3 (medium) or 0.36 (high), deadline 3 (long
    /// TTI) or 11 (short TTI) slots, round trip 1/2 (long) or 5/6 (short)
    /// slots for early/regular feedback, and two retransmissions for early
    /// feedback versus one for regular HARQ. Regular HARQ has perfect
    /// feedback.
    pub fn preset(load: Load, tti: Tti, scheme: Scheme, p_e: f64, fnr: f64, fpr: f64) -> Self {
        let p_arrival = match load {
            Load::Medium => 0.30,
            Load::High => 0.36,
        };
        let t_c = match tti {
            Tti::Long => 3,
            Tti::Short => 11,
        };
        let (t_rtt, n_retx, fnr, fpr) = match (tti, scheme) {
            (Tti::Long, Scheme::Early) => (1, 2, fnr, fpr),
            (Tti::Long, Scheme::Regular) => (2, 1, 0.0, 0.0),
            (Tti::Short, Scheme::Early) => (5, 2, fnr, fpr),
            (Tti::Short, Scheme::Regular) => (6, 1, 0.0, 0.0),
        };
        SystemConfig {
            n_ue: 20,
            p_arrival,
            n_res: 10,
            t_c,
            t_rtt,
            n_retx,
            p_e,
            fnr,
            fpr,
        }
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        for (name, v) in [
            ("p_arrival", self.p_arrival),
            ("p_e", self.p_e),
            ("fnr", self.fnr),
            ("fpr", self.fpr),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SystemError::Config(format!(
                    "{name} = {v} is not a probability"
                )));
            }
        }
        if self.n_ue == 0 || self.n_res == 0 || self.t_c == 0 || self.t_rtt == 0 {
            return Err(SystemError::Config(
                "n_ue, n_res, t_c and t_rtt must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Probability that a served transmission is followed by a NACK.
    pub fn p_r(&self) -> f64 {
        (1.0 - self.fnr) * self.p_e + self.fpr * (1.0 - self.p_e)
    }
}
