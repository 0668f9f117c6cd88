//! Modulation, AWGN / block-fading channels, LLR demapping, dataset
//! generation and SNR calibration.

mod calibrate;
mod dataset;

pub use calibrate::{calibrate_snr, estimate_bler, Calibration, CalibrationOptions};
pub use dataset::{
    generate_dataset, CodeSource, Dataset, DatasetSummary, GenerationConfig, TransmissionRecord,
};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ldpc::LdpcError;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("QPSK needs an even number of bits, got {0}")]
    OddLength(usize),
    #[error("invalid channel configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ldpc(#[from] LdpcError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("target BLER {target} is not bracketed by [{lo_db}, {hi_db}] dB")]
    NonBracketing { target: f64, lo_db: f64, hi_db: f64 },
    #[error("target BLER {target} needs about {needed} trials per point, limit is {limit}")]
    InsufficientTrials {
        target: f64,
        needed: f64,
        limit: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }
}

/// Per-codeword gain model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fading {
    #[default]
    None,
    /// Rayleigh block fading whose complex gain follows a first-order
    /// autoregression with coefficient `rho` across successive codewords.
    BlockAr1 { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Es/N0 in dB.
    pub snr_db: f64,
    pub modulation: Modulation,
    #[serde(default)]
    pub fading: Fading,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64, modulation: Modulation) -> Self {
        ChannelConfig {
            snr_db,
            modulation,
            fading: Fading::None,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.snr_db.is_finite() {
            return Err(ChannelError::Config("snr_db must be finite".into()));
        }
        if let Fading::BlockAr1 { rho } = self.fading {
            if !(0.0..1.0).contains(&rho) {
                return Err(ChannelError::Config(format!(
                    "rho must lie in [0, 1), got {rho}"
                )));
            }
        }
        Ok(())
    }

    /// Noise power spectral density for unit symbol energy.
    pub fn n0(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }
}

/// Channel output for one codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedWord {
    pub channel_llrs: Vec<f64>,
    pub tx_symbols: Vec<Complex64>,
    pub rx_symbols: Vec<Complex64>,
    pub block_gain: f64,
}

/// Gains `|h_t|` of the AR(1) Rayleigh process, one per codeword.
pub fn fading_gains<R: Rng>(fading: Fading, n: usize, rng: &mut R) -> Vec<f64> {
    match fading {
        Fading::None => vec![1.0; n],
        Fading::BlockAr1 { rho } => {
            let innov = (1.0 - rho * rho).sqrt();
            let draw = |rng: &mut R| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            };
            let mut h = draw(rng);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(h.norm());
                h = h * rho + draw(rng) * innov;
            }
            out
        }
    }
}

/// Maps bits to unit-energy symbols; bit 1 maps to the positive amplitude.
pub fn modulate(codeword: &[u8], modulation: Modulation) -> Result<Vec<Complex64>, ChannelError> {
    match modulation {
        Modulation::Bpsk => Ok(codeword
            .iter()
            .map(|&b| Complex64::new(if b & 1 == 1 { 1.0 } else { -1.0 }, 0.0))
            .collect()),
        Modulation::Qpsk => {
            if codeword.len() % 2 != 0 {
                return Err(ChannelError::OddLength(codeword.len()));
            }
            let a = std::f64::consts::FRAC_1_SQRT_2;
            let amp = |b: u8| if b & 1 == 1 { a } else { -a };
            Ok(codeword
                .chunks_exact(2)
                .map(|p| Complex64::new(amp(p[0]), amp(p[1])))
                .collect())
        }
    }
}

/// Sends `codeword` through the channel with a known block gain.
///
/// With per-dimension amplitude `a` and noise variance `N0/2`, each bit's
/// LLR is `4 g a y / N0`, which is exact for BPSK and Gray-mapped QPSK.
pub fn transmit_with_gain<R: Rng>(
    codeword: &[u8],
    cfg: &ChannelConfig,
    gain: f64,
    rng: &mut R,
) -> Result<ReceivedWord, ChannelError> {
    let tx = modulate(codeword, cfg.modulation)?;
    let n0 = cfg.n0();
    let sigma = (n0 / 2.0).sqrt();
    let rx: Vec<Complex64> = tx
        .iter()
        .map(|&s| {
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            s * gain + Complex64::new(nr * sigma, ni * sigma)
        })
        .collect();
    let llrs = match cfg.modulation {
        Modulation::Bpsk => rx.iter().map(|y| 4.0 * gain * y.re / n0).collect(),
        Modulation::Qpsk => {
            let scale = 4.0 * gain * std::f64::consts::FRAC_1_SQRT_2 / n0;
            rx.iter()
                .flat_map(|y| [scale * y.re, scale * y.im])
                .collect()
        }
    };
    Ok(ReceivedWord {
        channel_llrs: llrs,
        tx_symbols: tx,
        rx_symbols: rx,
        block_gain: gain,
    })
}

/// Sends one codeword; under block fading a fresh gain is drawn.
pub fn transmit<R: Rng>(
    codeword: &[u8],
    cfg: &ChannelConfig,
    rng: &mut R,
) -> Result<ReceivedWord, ChannelError> {
    cfg.validate()?;
    let gain = fading_gains(cfg.fading, 1, rng)[0];
    transmit_with_gain(codeword, cfg, gain, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use crate::stats::{wilson_interval, Z_3SIGMA};

    #[test]
    fn high_snr_llr_signs_match_bits() {
        let bits: Vec<u8> = (0..64).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        for m in [Modulation::Bpsk, Modulation::Qpsk] {
            let cfg = ChannelConfig::awgn(80.0, m);
            let rx = transmit(&bits, &cfg, &mut substream(1, Domain::Record, 0)).unwrap();
            assert_eq!(rx.channel_llrs.len(), bits.len());
            for (l, &b) in rx.channel_llrs.iter().zip(&bits) {
                assert_eq!(*l > 0.0, b == 1);
            }
        }
    }

    #[test]
    fn bpsk_raw_ber_matches_q_function() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let q = 1.0 - Normal::standard().cdf(2f64.sqrt());
        assert!((q - 0.0786).abs() < 1e-4);
        let cfg = ChannelConfig::awgn(0.0, Modulation::Bpsk);
        let bits = vec![0u8; 10_000];
        let mut errors = 0u64;
        for blk in 0..100 {
            let rx = transmit(&bits, &cfg, &mut substream(5, Domain::Record, blk)).unwrap();
            errors += rx.channel_llrs.iter().filter(|&&l| l > 0.0).count() as u64;
        }
        let (lo, hi) = wilson_interval(errors, 1_000_000, Z_3SIGMA);
        assert!(lo <= q && q <= hi, "{errors} errors, q = {q}");
    }

    #[test]
    fn seeded_transmission_is_deterministic() {
        let bits = vec![1u8, 0, 1, 1, 0, 0];
        let cfg = ChannelConfig::awgn(2.0, Modulation::Qpsk);
        let a = transmit(&bits, &cfg, &mut substream(9, Domain::Record, 4)).unwrap();
        let b = transmit(&bits, &cfg, &mut substream(9, Domain::Record, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn qpsk_rejects_odd_length_and_config_is_validated() {
        let cfg = ChannelConfig::awgn(2.0, Modulation::Qpsk);
        assert!(matches!(
            transmit(&[1, 0, 1], &cfg, &mut substream(1, Domain::Record, 0)),
            Err(ChannelError::OddLength(3))
        ));
        let bad = ChannelConfig {
            fading: Fading::BlockAr1 { rho: 1.0 },
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ar1_gains_have_unit_power_and_correlation() {
        let g = fading_gains(
            Fading::BlockAr1 { rho: 0.99 },
            200_000,
            &mut substream(3, Domain::Fading, 0),
        );
        let p: f64 = g.iter().map(|x| x * x).sum::<f64>() / g.len() as f64;
        assert!((p - 1.0).abs() < 0.1, "power {p}");
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let cov: f64 = g.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!(cov / var > 0.9);
    }
}
