//! Infinite-resource model of early-feedback HARQ with up to `n`
//! retransmissions, and a Monte Carlo simulation of its decision tree.
//!
//! Each transmission fails with some probability; the receiver then sends
//! NACK with probability `1 - p_fn` after a failure and `p_fp` after a
//! success. A NACK triggers another transmission until the budget `n` is
//! spent. The packet is lost when every transmission up to the first ACK
//! (or the last allowed one) failed.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::fmt_f64;
use crate::metrics::CurveSet;
use crate::rng::{substream, Domain};
use crate::stats::{MeanEstimate, Proportion, RunningMean, Z_3SIGMA};

#[derive(Debug, Error, PartialEq)]
pub enum HarqError {
    #[error("{name} = {value} is not a probability")]
    NotAProbability { name: &'static str, value: f64 },
}

/// Error probabilities of successive transmissions of one packet.
pub trait ErrorChain: Sync {
    /// Probability that transmission `history.len()` fails given the
    /// outcomes (1 = failed) of the earlier ones.
    fn p_error(&self, history: &[u8]) -> f64;
}

/// First transmission fails with `p_e`; a transmission following a failure
/// fails with `p_cond`, one following a success with `p_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovChain {
    pub p_e: f64,
    pub p_cond: f64,
}

impl ErrorChain for MarkovChain {
    fn p_error(&self, history: &[u8]) -> f64 {
        match history.last() {
            Some(1) => self.p_cond,
            _ => self.p_e,
        }
    }
}

impl<F: Fn(&[u8]) -> f64 + Sync> ErrorChain for F {
    fn p_error(&self, history: &[u8]) -> f64 {
        self(history)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarqParams {
    pub p_e: f64,
    pub p_fn: f64,
    pub p_fp: f64,
    /// Failure probability of a retransmission after a failure; equal to
    /// `p_e` for independent retransmissions.
    pub p_cond: f64,
    pub n: usize,
}

impl HarqParams {
    /// Independent retransmissions.
    pub fn independent(p_e: f64, p_fn: f64, p_fp: f64, n: usize) -> Self {
        HarqParams {
            p_e,
            p_fn,
            p_fp,
            p_cond: p_e,
            n,
        }
    }

    pub fn validate(&self) -> Result<(), HarqError> {
        for (name, value) in [
            ("p_e", self.p_e),
            ("p_fn", self.p_fn),
            ("p_fp", self.p_fp),
            ("p_cond", self.p_cond),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(HarqError::NotAProbability { name, value });
            }
        }
        Ok(())
    }

    pub fn chain(&self) -> MarkovChain {
        MarkovChain {
            p_e: self.p_e,
            p_cond: self.p_cond,
        }
    }

    /// Probability that one transmission is followed by a NACK.
    pub fn nack_prob(&self) -> f64 {
        self.p_e * (1.0 - self.p_fn) + (1.0 - self.p_e) * self.p_fp
    }
}

/// Residual loss probability `P_e * H_1` with
/// `H_j = p_fn + (1 - p_fn) * P(fail_j | all earlier failed) * H_{j+1}`
/// and `H_{n+1} = 1`.
pub fn effective_bler(params: &HarqParams) -> f64 {
    effective_bler_with(params, &params.chain())
}

pub fn effective_bler_with(params: &HarqParams, chain: &dyn ErrorChain) -> f64 {
    let failed = vec![1u8; params.n];
    let mut h = 1.0;
    for j in (1..=params.n).rev() {
        h = params.p_fn + (1.0 - params.p_fn) * chain.p_error(&failed[..j]) * h;
    }
    chain.p_error(&[]) * h
}

/// Probability of at least `k` retransmissions, summing over every
/// outcome sequence of the first `k` transmissions.
pub fn retransmission_prob(params: &HarqParams, k: usize) -> f64 {
    retransmission_prob_with(params, &params.chain(), k)
}

pub fn retransmission_prob_with(params: &HarqParams, chain: &dyn ErrorChain, k: usize) -> f64 {
    if k > params.n {
        log::warn!(
            "P_r,{k} requested beyond the retransmission budget {}",
            params.n
        );
    }
    let mut history = Vec::with_capacity(k);
    let mut total = 0.0;
    for bits in 0u64..(1u64 << k) {
        history.clear();
        let mut prob = 1.0;
        for i in 0..k {
            let x = ((bits >> i) & 1) as u8;
            let pe = chain.p_error(&history);
            prob *= if x == 1 {
                pe * (1.0 - params.p_fn)
            } else {
                (1.0 - pe) * params.p_fp
            };
            history.push(x);
        }
        total += prob;
    }
    total
}

/// `P_r,k` for independent retransmissions: `q^k` with `q` the NACK
/// probability.
pub fn retransmission_prob_independent(params: &HarqParams, k: usize) -> f64 {
    params.nack_prob().powi(k as i32)
}

/// `sum_{i=1..n} i * P_r,i`.
pub fn expected_retransmissions(params: &HarqParams) -> f64 {
    expected_retransmissions_with(params, &params.chain())
}

pub fn expected_retransmissions_with(params: &HarqParams, chain: &dyn ErrorChain) -> f64 {
    (1..=params.n)
        .map(|i| i as f64 * retransmission_prob_with(params, chain, i))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarqMonteCarlo {
    /// Lost packets, Wilson 3-sigma interval.
    pub p_hat: Proportion,
    /// Per-packet mean of `N (N + 1) / 2` for `N` retransmissions; its
    /// expectation is `sum i * P_r,i`.
    pub retrans_hat: MeanEstimate,
    /// Per-packet mean of `N`; its expectation is `sum P_r,i`.
    pub mean_retransmissions: MeanEstimate,
}

const MC_BLOCK: u64 = 1 << 16;

/// Walks the feedback tree `trials` times.
pub fn monte_carlo_harq(params: &HarqParams, trials: u64, seed: u64) -> HarqMonteCarlo {
    monte_carlo_harq_with(params, &params.chain(), trials, seed)
}

pub fn monte_carlo_harq_with(
    params: &HarqParams,
    chain: &dyn ErrorChain,
    trials: u64,
    seed: u64,
) -> HarqMonteCarlo {
    let blocks = trials.div_ceil(MC_BLOCK);
    let (lost, tri, count) = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::Harq, b);
            let len = MC_BLOCK.min(trials - b * MC_BLOCK);
            let mut lost = 0u64;
            let mut tri = RunningMean::default();
            let mut count = RunningMean::default();
            let mut history = Vec::with_capacity(params.n + 1);
            for _ in 0..len {
                history.clear();
                let mut delivered = false;
                let mut retx = 0usize;
                loop {
                    let failed = rng.random::<f64>() < chain.p_error(&history);
                    delivered |= !failed;
                    history.push(failed as u8);
                    let nack = if failed {
                        rng.random::<f64>() >= params.p_fn
                    } else {
                        rng.random::<f64>() < params.p_fp
                    };
                    if !nack || retx == params.n {
                        break;
                    }
                    retx += 1;
                }
                lost += u64::from(!delivered);
                let n = retx as f64;
                tri.push(n * (n + 1.0) / 2.0);
                count.push(n);
            }
            (lost, tri, count)
        })
        .reduce(
            || (0, RunningMean::default(), RunningMean::default()),
            |mut a, b| {
                a.0 += b.0;
                a.1.merge(&b.1);
                a.2.merge(&b.2);
                a
            },
        );
    HarqMonteCarlo {
        p_hat: Proportion::wilson(lost, trials, Z_3SIGMA),
        retrans_hat: tri.estimate(Z_3SIGMA),
        mean_retransmissions: count.estimate(Z_3SIGMA),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fnr: f64,
    pub fpr: f64,
    pub p_eff: f64,
    pub exp_retx: f64,
}

/// Evaluates every operating point of a curve with `skeleton`'s `p_e`,
/// `p_cond` and `n`.
pub fn sweep_operating_points(curve: &CurveSet, skeleton: &HarqParams) -> Vec<SweepRow> {
    curve
        .points
        .iter()
        .map(|pt| {
            let p = HarqParams {
                p_fn: pt.fnr,
                p_fp: pt.fpr,
                ..*skeleton
            };
            SweepRow {
                fnr: pt.fnr,
                fpr: pt.fpr,
                p_eff: effective_bler(&p),
                exp_retx: expected_retransmissions(&p),
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "fnr,fpr,p_eff,exp_retx")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r.fnr),
            fmt_f64(r.fpr),
            fmt_f64(r.p_eff),
            fmt_f64(r.exp_retx)
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::fnr_fpr_curve;
    use proptest::prelude::*;

    #[test]
    fn single_retransmission_examples() {
        let p = HarqParams::independent(0.3, 1.0, 0.2, 1);
        assert_eq!(effective_bler(&p), 0.3);
        let p = HarqParams::independent(0.001604, 1e-3, 0.0, 1);
        assert!((effective_bler(&p) - 4.174e-6).abs() < 5e-10);
        let p = HarqParams::independent(0.004742, 1e-3, 1e-2, 1);
        assert!((retransmission_prob(&p, 1) - 0.014690).abs() < 5e-7);
        assert_eq!(expected_retransmissions(&p), retransmission_prob(&p, 1));
    }

    #[test]
    fn two_retransmission_examples() {
        let p = HarqParams::independent(0.1, 0.05, 0.0, 2);
        assert!((effective_bler(&p) - 0.0063775).abs() < 1e-15);
        // q = 0.1 reached with p_e = 0.1, p_fn = 0, p_fp = 0
        let p = HarqParams::independent(0.1, 0.0, 0.0, 2);
        assert!((expected_retransmissions(&p) - 0.12).abs() < 1e-15);
        let p = HarqParams::independent(0.0, 0.3, 0.0, 3);
        assert_eq!(expected_retransmissions(&p), 0.0);
        assert_eq!(retransmission_prob(&p, 2), 0.0);
    }

    #[test]
    fn explicit_expansions_and_reductions() {
        let (e, f) = (0.07, 0.13);
        let h = |inner: f64| f + (1.0 - f) * e * inner;
        for (n, want) in [
            (0, e),
            (1, e * h(1.0)),
            (2, e * h(h(1.0))),
            (3, e * h(h(h(1.0)))),
        ] {
            let p = HarqParams::independent(e, f, 0.4, n);
            assert!((effective_bler(&p) - want).abs() < 1e-16);
        }
        let p = HarqParams {
            p_e: 0.2,
            p_fn: 0.0,
            p_fp: 0.1,
            p_cond: 0.5,
            n: 3,
        };
        assert!((effective_bler(&p) - 0.2 * 0.5 * 0.5 * 0.5).abs() < 1e-16);
    }

    #[test]
    fn leading_order_term() {
        let p = HarqParams {
            p_e: 1e-3,
            p_fn: 1e-4,
            p_fp: 0.0,
            p_cond: 2e-3,
            n: 1,
        };
        let lead = p.p_fn * p.p_e + p.p_e * p.p_cond;
        let rest = effective_bler(&p) - lead;
        assert!(rest.abs() <= 2.0 * p.p_fn * p.p_e * p.p_cond);
    }

    #[test]
    fn monte_carlo_matches_total_bler_with_perfect_feedback() {
        let p = HarqParams::independent(0.2, 0.0, 0.0, 2);
        let mc = monte_carlo_harq(&p, 1_000_000, 3);
        assert!(mc.p_hat.contains(0.2f64.powi(3)), "{mc:?}");
        assert_eq!(mc, monte_carlo_harq(&p, 1_000_000, 3));
    }

    #[test]
    fn monte_carlo_agrees_with_dependent_chain() {
        let p = HarqParams {
            p_e: 0.1,
            p_fn: 0.05,
            p_fp: 0.03,
            p_cond: 0.4,
            n: 3,
        };
        let mc = monte_carlo_harq(&p, 1_000_000, 5);
        assert!(mc.p_hat.contains(effective_bler(&p)));
        let e = expected_retransmissions(&p);
        assert!(
            mc.retrans_hat.lo <= e && e <= mc.retrans_hat.hi,
            "{e} {mc:?}"
        );
        let mean: f64 = (1..=3).map(|i| retransmission_prob(&p, i)).sum();
        let m = mc.mean_retransmissions;
        assert!(m.lo <= mean && mean <= m.hi);
    }

    #[test]
    fn sweep_endpoints_and_monotonicity() {
        let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let labels = [0, 1, 0, 0, 1, 0, 1, 1];
        let curve = fnr_fpr_curve(&scores, &labels).unwrap();
        let skel = HarqParams::independent(0.01, 0.0, 0.0, 2);
        let rows = sweep_operating_points(&curve, &skel);
        let first = rows.first().unwrap();
        assert_eq!((first.fnr, first.fpr), (0.0, 1.0));
        assert!((first.p_eff - 0.01f64.powi(3)).abs() < 1e-18);
        assert_eq!(rows.last().unwrap().p_eff, 0.01);
        for w in rows.windows(2) {
            assert!(w[0].fnr <= w[1].fnr && w[0].p_eff <= w[1].p_eff);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("fnr,fpr,p_eff,exp_retx\n"));
    }

    proptest! {
        #[test]
        fn general_sum_equals_closed_form(
            e in 0.0f64..1.0, f in 0.0f64..1.0, fp in 0.0f64..1.0, k in 1usize..=3
        ) {
            let p = HarqParams::independent(e, f, fp, 3);
            let a = retransmission_prob(&p, k);
            let b = retransmission_prob_independent(&p, k);
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }
}
