use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{SystemConfig, SystemError};
use crate::stats::{binomial_pmf, convolve};

/// Outcome of propagating the resource distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Convergence {
    Converged {
        slots: usize,
        residual: f64,
    },
    /// The mean kept growing for the whole detection window.
    Diverged {
        slots: usize,
        mean: f64,
    },
    MaxIter {
        slots: usize,
        residual: f64,
    },
}

/// Probability of `k` transmissions demanding service in a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDistribution {
    pub probs: Vec<f64>,
    pub convergence: Convergence,
    /// Mass dropped by truncating the upper tail.
    pub truncated_mass: f64,
}

impl ResourceDistribution {
    pub fn mean(&self) -> f64 {
        mean(&self.probs)
    }

    pub fn is_converged(&self) -> bool {
        matches!(self.convergence, Convergence::Converged { .. })
    }

    /// Smallest and largest counts outside of which at most `eps` mass
    /// lies on each side.
    pub fn support(&self, eps: f64) -> (usize, usize) {
        let mut acc = 0.0;
        let lo = self
            .probs
            .iter()
            .position(|p| {
                acc += p;
                acc > eps
            })
            .unwrap_or(0);
        let mut acc = 0.0;
        let hi = self
            .probs
            .iter()
            .rposition(|p| {
                acc += p;
                acc > eps
            })
            .unwrap_or(0);
        (lo, hi)
    }

    /// Whether the support is narrow enough for the "previous slot had
    /// exactly `N_res`" approximation: `N_min > N_max - N_res`.
    pub fn narrow_support(&self, n_res: usize, eps: f64) -> bool {
        let (lo, hi) = self.support(eps);
        lo + n_res > hi
    }
}

fn mean(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(k, v)| k as f64 * v).sum()
}

/// Binomial number of new packets over all UEs.
pub fn arrival_distribution(n_ue: usize, p_arrival: f64) -> Vec<f64> {
    binomial_pmf(n_ue as u64, p_arrival)
}

/// Retransmissions caused by one slot whose demand is distributed as
/// `prev`: at most `N_res` of the `k` demanded transmissions are served
/// and each is NACKed independently with probability `P_r`. Demand above
/// `N_res` is summarised by its total mass `1 - sum_{k<=N_res} prev(k)`.
pub fn retransmission_load_distribution(prev: &[f64], cfg: &SystemConfig) -> Vec<f64> {
    let n_res = cfg.n_res;
    let p_r = cfg.p_r();
    let mut out = vec![0.0; n_res + 1];
    let mut head = 0.0;
    for (k, &pk) in prev.iter().enumerate().take(n_res + 1) {
        head += pk;
        if pk == 0.0 {
            continue;
        }
        for (m, b) in binomial_pmf(k as u64, p_r).into_iter().enumerate() {
            out[m] += pk * b;
        }
    }
    let tail = (1.0 - head).max(0.0);
    if tail > 0.0 {
        for (m, b) in binomial_pmf(n_res as u64, p_r).into_iter().enumerate() {
            out[m] += tail * b;
        }
    }
    out
}

/// Demand carried over: `o > 0` unserved transmissions with probability
/// `P_res(N_res + o)`, none with the mass at or below `N_res`.
fn overload_distribution(prev: &[f64], n_res: usize) -> Vec<f64> {
    let mut out = vec![0.0; prev.len().saturating_sub(n_res).max(1)];
    out[0] = prev.iter().take(n_res + 1).sum();
    for (o, &p) in prev.iter().enumerate().skip(n_res + 1) {
        out[o - n_res] = p;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationOptions {
    pub max_slots: usize,
    /// Stop when successive distributions differ by less than this in l1.
    pub l1_tol: f64,
    /// Upper-tail mass dropped after every slot.
    pub tail_eps: f64,
    pub warmup: usize,
    /// Consecutive slots of mean growth that count as divergence.
    pub drift_window: usize,
    pub drift_eps: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            max_slots: 20_000,
            l1_tol: 1e-12,
            tail_eps: 1e-15,
            warmup: 200,
            drift_window: 100,
            drift_eps: 1e-6,
        }
    }
}

fn truncate_tail(p: &mut Vec<f64>, eps: f64) -> f64 {
    let mut acc = 0.0;
    let mut cut = p.len();
    while cut > 1 && acc + p[cut - 1] < eps {
        acc += p[cut - 1];
        cut -= 1;
    }
    p.truncate(cut);
    acc
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .sum()
}

/// Iterates `P_res(t) = P_A * P_H(t - T_RTT) * P_OL(t - 1)` (discrete
/// convolutions) from an empty system until it settles or drifts away.
pub fn propagate_resource_distribution(
    cfg: &SystemConfig,
    opts: &PropagationOptions,
) -> Result<ResourceDistribution, SystemError> {
    cfg.validate()?;
    let arrivals = arrival_distribution(cfg.n_ue, cfg.p_arrival);
    // history[0] is P_res(t - 1), history[T_RTT - 1] is P_res(t - T_RTT)
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(cfg.t_rtt);
    let mut truncated = 0.0;
    let mut prev_mean = 0.0;
    let mut growth_run = 0usize;
    let mut residual = f64::INFINITY;
    for t in 0..opts.max_slots {
        let retx = match history.get(cfg.t_rtt - 1) {
            Some(p) => retransmission_load_distribution(p, cfg),
            None => vec![1.0],
        };
        let overload = match history.front() {
            Some(p) => overload_distribution(p, cfg.n_res),
            None => vec![1.0],
        };
        let mut next = convolve(&convolve(&arrivals, &retx), &overload);
        truncated += truncate_tail(&mut next, opts.tail_eps);
        let m = mean(&next);
        if let Some(p) = history.front() {
            residual = l1(&next, p);
        }
        growth_run = if m - prev_mean > opts.drift_eps {
            growth_run + 1
        } else {
            0
        };
        prev_mean = m;
        history.push_front(next);
        history.truncate(cfg.t_rtt);
        let probs = || history.front().cloned().expect("just pushed");
        if residual < opts.l1_tol {
            return Ok(ResourceDistribution {
                probs: probs(),
                convergence: Convergence::Converged {
                    slots: t + 1,
                    residual,
                },
                truncated_mass: truncated,
            });
        }
        if t >= opts.warmup && growth_run >= opts.drift_window {
            return Ok(ResourceDistribution {
                probs: probs(),
                convergence: Convergence::Diverged {
                    slots: t + 1,
                    mean: m,
                },
                truncated_mass: truncated,
            });
        }
    }
    Ok(ResourceDistribution {
        probs: history.front().cloned().unwrap_or_else(|| vec![1.0]),
        convergence: Convergence::MaxIter {
            slots: opts.max_slots,
            residual,
        },
        truncated_mass: truncated,
    })
}

/// Form of the one-step conditional demand distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditional {
    /// Arrivals, retransmissions of the `min(n_prev, N_res)` served
    /// transmissions, and the `max(n_prev - N_res, 0)` unserved ones.
    Exact,
    /// As if the previous slot had demanded at most `N_res`: the overload
    /// shift is dropped and `n_prev` is capped at `N_res`.
    Lemma1,
}

/// Demand in a slot given the demand `n_prev` of the slot before.
pub fn conditional_resource_distribution(
    n_prev: usize,
    cfg: &SystemConfig,
    form: Conditional,
) -> Vec<f64> {
    let served = n_prev.min(cfg.n_res);
    let retx = binomial_pmf(served as u64, cfg.p_r());
    let base = convolve(&arrival_distribution(cfg.n_ue, cfg.p_arrival), &retx);
    match form {
        Conditional::Lemma1 => base,
        Conditional::Exact => {
            let shift = n_prev.saturating_sub(cfg.n_res);
            let mut out = vec![0.0; shift];
            out.extend(base);
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Load, Scheme, Tti};
    use rand::{Rng, SeedableRng};

    fn medium() -> SystemConfig {
        SystemConfig::preset(Load::Medium, Tti::Long, Scheme::Early, 0.001604, 1e-3, 0.05)
    }

    #[test]
    fn arrival_examples() {
        let p = arrival_distribution(20, 0.3);
        assert!((p[0] - 0.7f64.powi(20)).abs() < 1e-18);
        assert!((p[0] - 7.98e-4).abs() < 1e-6);
        assert!((p[6] - 0.19164).abs() < 1e-5);
        let mode = (0..=20).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(mode, 6);
        assert_eq!(arrival_distribution(20, 0.0)[0], 1.0);
    }

    #[test]
    fn retransmission_load_examples() {
        let mut cfg = medium();
        cfg.p_e = 0.0;
        cfg.fpr = 0.0;
        let prev = vec![0.2, 0.3, 0.5];
        assert_eq!(retransmission_load_distribution(&prev, &cfg)[0], 1.0);

        let cfg = medium();
        let mut point = vec![0.0; cfg.n_res + 1];
        point[cfg.n_res] = 1.0;
        let got = retransmission_load_distribution(&point, &cfg);
        let want = binomial_pmf(cfg.n_res as u64, cfg.p_r());
        assert!(l1(&got, &want) < 1e-15);
    }

    #[test]
    fn retransmission_load_matches_direct_sum() {
        let cfg = medium();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let len = rng.random_range(1..30);
            let mut prev: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            let s: f64 = prev.iter().sum();
            prev.iter_mut().for_each(|v| *v /= s);
            let mut direct = vec![0.0; cfg.n_res + 1];
            for (k, &pk) in prev.iter().enumerate() {
                let n = k.min(cfg.n_res);
                for (m, b) in binomial_pmf(n as u64, cfg.p_r()).into_iter().enumerate() {
                    direct[m] += pk * b;
                }
            }
            assert!(l1(&retransmission_load_distribution(&prev, &cfg), &direct) < 1e-12);
        }
    }

    #[test]
    fn reference_load_converges_and_heavier_population_diverges() {
        let cfg = SystemConfig::preset(Load::High, Tti::Long, Scheme::Early, 0.001604, 1e-3, 0.05);
        let opts = PropagationOptions {
            l1_tol: 1e-10,
            ..Default::default()
        };
        let d = propagate_resource_distribution(&cfg, &opts).unwrap();
        assert!(d.is_converged(), "{:?}", d.convergence);
        let total: f64 = d.probs.iter().sum();
        assert!(total > 1.0 - 1e-9 && total <= 1.0 + 1e-12);
        assert!(d.mean() >= cfg.n_ue as f64 * cfg.p_arrival);

        let heavy = SystemConfig { n_ue: 30, ..cfg };
        let d = propagate_resource_distribution(&heavy, &opts).unwrap();
        assert!(
            matches!(d.convergence, Convergence::Diverged { .. }),
            "{:?}",
            d.convergence
        );
    }

    #[test]
    fn longer_round_trip_still_converges() {
        let cfg = SystemConfig::preset(
            Load::Medium,
            Tti::Short,
            Scheme::Regular,
            0.004742,
            0.0,
            0.0,
        );
        let d = propagate_resource_distribution(&cfg, &PropagationOptions::default()).unwrap();
        assert!(d.is_converged());
        assert!(d.mean() >= 6.0);
    }

    #[test]
    fn conditional_examples() {
        let cfg = medium();
        let pa = arrival_distribution(cfg.n_ue, cfg.p_arrival);
        let c0 = conditional_resource_distribution(0, &cfg, Conditional::Exact);
        assert!(l1(&c0, &pa) < 1e-15);
        let mut quiet = cfg;
        quiet.p_e = 0.0;
        quiet.fpr = 0.0;
        let c = conditional_resource_distribution(cfg.n_res, &quiet, Conditional::Exact);
        assert!(l1(&c, &pa) < 1e-15);
        let a = conditional_resource_distribution(cfg.n_res, &cfg, Conditional::Exact);
        let b = conditional_resource_distribution(cfg.n_res, &cfg, Conditional::Lemma1);
        assert_eq!(a, b);
        let shifted = conditional_resource_distribution(cfg.n_res + 3, &cfg, Conditional::Exact);
        assert_eq!(&shifted[3..], &b[..]);
    }
}
