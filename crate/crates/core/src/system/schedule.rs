use serde::{Deserialize, Serialize};

use super::resource::{
    conditional_resource_distribution, propagate_resource_distribution, Conditional,
    PropagationOptions, ResourceDistribution,
};
use super::{SystemConfig, SystemError};

/// Chance that one extra transmission is picked by the random scheduler
/// when `k` others compete for `n_res` resources.
fn served(k: usize, n_res: usize) -> f64 {
    (n_res as f64 / (k as f64 + 1.0)).min(1.0)
}

fn check_converged(stationary: &ResourceDistribution) -> Result<(), SystemError> {
    if stationary.is_converged() {
        Ok(())
    } else {
        Err(SystemError::NotConverged(format!(
            "{:?}",
            stationary.convergence
        )))
    }
}

/// Probability that a transmission becoming eligible in a steady-state
/// slot is served exactly `dt` slots later.
///
/// The first slot uses the stationary demand; every later slot uses the
/// demand conditioned on a fully loaded predecessor (exactly `N_res`), which
/// makes the waiting time geometric after the first slot.
pub fn scheduling_p1(
    stationary: &ResourceDistribution,
    cfg: &SystemConfig,
    dt: usize,
) -> Result<f64, SystemError> {
    check_converged(stationary)?;
    let n_res = cfg.n_res;
    let p = &stationary.probs;
    if dt == 0 {
        return Ok(p
            .iter()
            .enumerate()
            .map(|(k, v)| v * served(k, n_res))
            .sum());
    }
    let first: f64 = p
        .iter()
        .enumerate()
        .map(|(k, v)| v * (1.0 - served(k, n_res)))
        .sum();
    let cond = conditional_resource_distribution(n_res, cfg, Conditional::Lemma1);
    let wait: f64 = cond
        .iter()
        .enumerate()
        .map(|(k, v)| v * (1.0 - served(k, n_res)))
        .sum();
    let last: f64 = cond
        .iter()
        .enumerate()
        .map(|(k, v)| v * served(k, n_res))
        .sum();
    Ok(first * wait.powi(dt as i32 - 1) * last)
}

/// The same waiting-time probability with the full one-step conditional
/// demand chain, including carried-over overload.
pub fn scheduling_p1_exact(
    stationary: &ResourceDistribution,
    cfg: &SystemConfig,
    dt: usize,
) -> Result<f64, SystemError> {
    check_converged(stationary)?;
    let n_res = cfg.n_res;
    // mass of "still waiting" by current demand
    let mut waiting: Vec<f64> = stationary.probs.clone();
    let finish = |w: &[f64]| -> f64 {
        w.iter()
            .enumerate()
            .map(|(k, v)| v * served(k, n_res))
            .sum()
    };
    if dt == 0 {
        return Ok(finish(&waiting));
    }
    waiting
        .iter_mut()
        .enumerate()
        .for_each(|(k, v)| *v *= 1.0 - served(k, n_res));
    for step in 1..=dt {
        let mut next = Vec::new();
        for (k, &w) in waiting.iter().enumerate() {
            if w < 1e-300 {
                continue;
            }
            let cond = conditional_resource_distribution(k, cfg, Conditional::Exact);
            if next.len() < cond.len() {
                next.resize(cond.len(), 0.0);
            }
            next.iter_mut().zip(&cond).for_each(|(a, c)| *a += w * c);
        }
        if step == dt {
            return Ok(finish(&next));
        }
        next.iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v *= 1.0 - served(k, n_res));
        waiting = next;
    }
    unreachable!("loop returns at dt")
}

/// Waiting-time probabilities and the resulting deadline probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingProbs {
    /// `p1[dt]` for `dt = 0..t_c`.
    pub p1: Vec<f64>,
    /// `ps[j]`: the initial transmission and `j` retransmissions are all
    /// served by slot offset `t_c - 1`, for `j = 0..=n_retx`.
    pub ps: Vec<f64>,
}

/// Sums `P1(k_0) P1(k_1 - k_0 - T_RTT) ... P1(k_j - k_{j-1} - T_RTT)` over
/// service offsets with `k_i >= k_{i-1} + T_RTT` and `k_j <= T_c - 1`.
pub fn schedule_within_constraint(cfg: &SystemConfig, p1: &[f64]) -> Vec<f64> {
    let tc = cfg.t_c;
    let p1_at = |d: usize| p1.get(d).copied().unwrap_or(0.0);
    // f[k]: all stages so far done, the latest one served at offset k
    let mut f: Vec<f64> = (0..tc).map(p1_at).collect();
    let mut ps = vec![f.iter().sum()];
    for _ in 1..=cfg.n_retx {
        let mut g = vec![0.0; tc];
        for (k, gk) in g.iter_mut().enumerate() {
            for (kp, &fk) in f.iter().enumerate() {
                if kp + cfg.t_rtt <= k {
                    *gk += fk * p1_at(k - kp - cfg.t_rtt);
                }
            }
        }
        f = g;
        ps.push(f.iter().sum());
    }
    ps
}

/// `P_pf = (1 - P_S,0) + P_S,0 P_e H_1` with
/// `H_j = p_fn + (1 - p_fn) [(1 - r_j) + r_j P_e H_{j+1}]`,
/// `r_j = P_S,j / P_S,j-1` and `H_{n+1} = 1`.
pub fn packet_failure_prob_from(ps: &[f64], p_e: f64, fnr: f64) -> f64 {
    let n = ps.len() - 1;
    let mut h = 1.0;
    for j in (1..=n).rev() {
        let r = if ps[j - 1] > 0.0 {
            ps[j] / ps[j - 1]
        } else {
            assert!(ps[j] == 0.0, "scheduling probabilities must not increase");
            0.0
        };
        h = fnr + (1.0 - fnr) * ((1.0 - r) + r * p_e * h);
    }
    (1.0 - ps[0]) + ps[0] * p_e * h
}

/// Which waiting-time model feeds the deadline probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P1Form {
    /// [`scheduling_p1`]: geometric waiting after the first slot.
    #[default]
    Lemma1,
    /// [`scheduling_p1_exact`].
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketFailure {
    pub p_pf: f64,
    pub scheduling: SchedulingProbs,
    pub stationary: ResourceDistribution,
    /// Whether the stationary support is narrow enough for the geometric
    /// waiting approximation (tails below `1e-12`).
    pub narrow_support: bool,
}

/// Packet failure probability from the stationary demand of `cfg`.
pub fn packet_failure_prob(
    cfg: &SystemConfig,
    opts: &PropagationOptions,
    form: P1Form,
) -> Result<PacketFailure, SystemError> {
    let stationary = propagate_resource_distribution(cfg, opts)?;
    check_converged(&stationary)?;
    let p1 = (0..cfg.t_c)
        .map(|dt| match form {
            P1Form::Lemma1 => scheduling_p1(&stationary, cfg, dt),
            P1Form::Exact => scheduling_p1_exact(&stationary, cfg, dt),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ps = schedule_within_constraint(cfg, &p1);
    Ok(PacketFailure {
        p_pf: packet_failure_prob_from(&ps, cfg.p_e, cfg.fnr),
        scheduling: SchedulingProbs { p1, ps },
        narrow_support: stationary.narrow_support(cfg.n_res, 1e-12),
        stationary,
    })
}
