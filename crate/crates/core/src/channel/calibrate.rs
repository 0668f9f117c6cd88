use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::random_info;
use super::{fading_gains, transmit_with_gain, ChannelConfig, ChannelError};
use crate::ldpc::{
    derive_generator, encode, min_sum_decode, GeneratorMapping, MinSumConfig, ParityCheckMatrix,
};
use crate::rng::{substream, Domain};
use crate::stats::{Proportion, Z_95};

/// Search settings for [`calibrate_snr`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub lo_db: f64,
    pub hi_db: f64,
    /// Accepted CI half-width relative to the target.
    pub tolerance: f64,
    pub max_trials: u64,
    pub batch: u64,
    pub z: f64,
    /// Bisection stops once the bracket is narrower than this.
    pub resolution_db: f64,
    pub full_decode_iters: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            lo_db: -10.0,
            hi_db: 15.0,
            tolerance: 0.25,
            max_trials: 200_000,
            batch: 2_000,
            z: Z_95,
            resolution_db: 1e-3,
            full_decode_iters: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub snr_db: f64,
    pub bler: Proportion,
    pub evaluations: usize,
}

fn block_errors(
    h: &ParityCheckMatrix,
    g: &GeneratorMapping,
    channel: &ChannelConfig,
    gains: &[f64],
    range: std::ops::Range<u64>,
    iters: usize,
    seed: u64,
) -> Result<u64, ChannelError> {
    let cfg = MinSumConfig::new(iters, 0);
    range
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Domain::Calibration, i);
            let cw = encode(g, &random_info(g, &mut rng))?;
            let rx = transmit_with_gain(&cw, channel, gains[i as usize], &mut rng)?;
            let out = min_sum_decode(h, &rx.channel_llrs, &cfg)?;
            Ok(u64::from(out.hard_decision != cw))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Monte Carlo block error rate of full-code decoding.
///
/// Trial `i` uses the same random numbers at every SNR, so estimates taken
/// at different SNRs with one seed are directly comparable.
pub fn estimate_bler(
    h: &ParityCheckMatrix,
    channel: &ChannelConfig,
    trials: u64,
    full_decode_iters: usize,
    seed: u64,
) -> Result<Proportion, ChannelError> {
    channel.validate()?;
    let g = derive_generator(h)?;
    let gains = fading_gains(
        channel.fading,
        trials as usize,
        &mut substream(seed, Domain::Fading, 1),
    );
    let errors = block_errors(h, &g, channel, &gains, 0..trials, full_decode_iters, seed)?;
    Ok(Proportion::wilson(errors, trials, Z_95))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    /// BLER significantly above target.
    Above,
    Below,
    Match,
}

/// Finds an SNR whose simulated BLER interval contains `target`.
pub fn calibrate_snr(
    h: &ParityCheckMatrix,
    template: &ChannelConfig,
    target: f64,
    opts: &CalibrationOptions,
) -> Result<Calibration, ChannelError> {
    if !(target > 0.0 && target < 1.0) || opts.tolerance <= 0.0 || opts.batch == 0 {
        return Err(ChannelError::Config(format!(
            "calibration needs 0 < target < 1 and positive tolerance/batch (target {target})"
        )));
    }
    // Trials needed before the interval can be narrow enough to match.
    let needed = opts.z * opts.z * (1.0 - target) / (opts.tolerance * opts.tolerance * target);
    if needed > opts.max_trials as f64 {
        return Err(ChannelError::InsufficientTrials {
            target,
            needed: needed.ceil(),
            limit: opts.max_trials,
        });
    }
    let g = derive_generator(h)?;
    let gains = fading_gains(
        template.fading,
        opts.max_trials as usize,
        &mut substream(opts.seed, Domain::Fading, 1),
    );
    let mut evaluations = 0;
    let mut evaluate = |snr_db: f64| -> Result<(Verdict, Proportion), ChannelError> {
        evaluations += 1;
        let channel = ChannelConfig {
            snr_db,
            ..*template
        };
        channel.validate()?;
        let (mut errors, mut trials) = (0u64, 0u64);
        loop {
            let next = (trials + opts.batch).min(opts.max_trials);
            errors += block_errors(
                h,
                &g,
                &channel,
                &gains,
                trials..next,
                opts.full_decode_iters,
                opts.seed,
            )?;
            trials = next;
            let p = Proportion::wilson(errors, trials, opts.z);
            let verdict = if p.lo > target {
                Some(Verdict::Above)
            } else if p.hi < target {
                Some(Verdict::Below)
            } else if (p.hi - p.lo) / 2.0 <= opts.tolerance * target || trials >= opts.max_trials {
                Some(Verdict::Match)
            } else {
                None
            };
            if let Some(v) = verdict {
                log::debug!("calibration {snr_db:.4} dB: {errors}/{trials} -> {v:?}");
                return Ok((v, p));
            }
        }
    };

    let (mut lo, mut hi) = (opts.lo_db, opts.hi_db);
    let (v_lo, p_lo) = evaluate(lo)?;
    if v_lo == Verdict::Match {
        return Ok(Calibration {
            snr_db: lo,
            bler: p_lo,
            evaluations: 1,
        });
    }
    let (v_hi, p_hi) = evaluate(hi)?;
    if v_hi == Verdict::Match {
        return Ok(Calibration {
            snr_db: hi,
            bler: p_hi,
            evaluations: 2,
        });
    }
    if v_lo != Verdict::Above || v_hi != Verdict::Below {
        return Err(ChannelError::NonBracketing {
            target,
            lo_db: lo,
            hi_db: hi,
        });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let (v, p) = evaluate(mid)?;
        match v {
            Verdict::Match => {
                return Ok(Calibration {
                    snr_db: mid,
                    bler: p,
                    evaluations,
                });
            }
            Verdict::Above => lo = mid,
            Verdict::Below => hi = mid,
        }
        if hi - lo < opts.resolution_db {
            return Err(ChannelError::NonBracketing {
                target,
                lo_db: lo,
                hi_db: hi,
            });
        }
    }
}
