use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fading_gains, transmit_with_gain, ChannelConfig, ChannelError};
use crate::features::{euclidean_distance, vnr_sequence};
use crate::io::fmt_f64;
use crate::ldpc::{
    derive_generator, encode, extract_subcode, gallager_regular, min_sum_decode, parse_alist,
    GeneratorMapping, MinSumConfig, ParityCheckMatrix, RowSelection,
};
use crate::rng::{substream, Domain};
use crate::stats::{Proportion, Z_95};

/// Where the parity-check matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CodeSource {
    Gallager {
        n: usize,
        col_weight: usize,
        row_weight: usize,
        seed: u64,
    },
    Alist {
        path: PathBuf,
    },
}

impl Default for CodeSource {
    fn default() -> Self {
        CodeSource::Gallager {
            n: 360,
            col_weight: 3,
            row_weight: 6,
            seed: 1,
        }
    }
}

impl CodeSource {
    pub fn load(&self) -> Result<ParityCheckMatrix, ChannelError> {
        match self {
            CodeSource::Gallager {
                n,
                col_weight,
                row_weight,
                seed,
            } => {
                if *col_weight == 0 || *row_weight == 0 || n % row_weight != 0 {
                    return Err(ChannelError::Config(format!(
                        "regular code needs n divisible by the row weight (n={n}, dc={row_weight})"
                    )));
                }
                Ok(gallager_regular(*n, *col_weight, *row_weight, *seed))
            }
            CodeSource::Alist { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ChannelError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                Ok(parse_alist(&text)?)
            }
        }
    }
}

fn default_vnr_iters() -> usize {
    5
}

fn default_full_iters() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub channel: ChannelConfig,
    #[serde(default)]
    pub code: CodeSource,
    pub subcode_fraction: f64,
    #[serde(default = "default_vnr_iters")]
    pub vnr_iters: usize,
    #[serde(default = "default_full_iters")]
    pub full_decode_iters: usize,
    pub n_records: usize,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        self.channel.validate()?;
        if self.vnr_iters > self.full_decode_iters {
            return Err(ChannelError::Config(format!(
                "vnr_iters ({}) exceeds full_decode_iters ({})",
                self.vnr_iters, self.full_decode_iters
            )));
        }
        if !(self.subcode_fraction > 0.0 && self.subcode_fraction <= 1.0) {
            return Err(ChannelError::Config(format!(
                "subcode_fraction must lie in (0, 1], got {}",
                self.subcode_fraction
            )));
        }
        Ok(())
    }
}

/// One labelled transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    pub idx: u64,
    /// 1 when full-code decoding failed.
    pub label: u8,
    pub vnr: Vec<f64>,
    pub eucd: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_records: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub bler_ci95_lo: f64,
    pub bler_ci95_hi: f64,
    pub snr_db: f64,
    pub code_length: usize,
    pub subcode_rows: usize,
    pub subcode_vars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TransmissionRecord>,
    pub summary: DatasetSummary,
}

impl Dataset {
    /// Writes `idx,label,vnr_0,...,vnr_J,eucd,gain`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n_vnr = self.records.first().map_or(0, |r| r.vnr.len());
        let mut header = String::from("idx,label");
        for j in 0..n_vnr {
            header.push_str(&format!(",vnr_{j}"));
        }
        header.push_str(",eucd,gain");
        writeln!(w, "{header}")?;
        for r in &self.records {
            let mut line = format!("{},{}", r.idx, r.label);
            for v in &r.vnr {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            line.push(',');
            line.push_str(&fmt_f64(r.eucd));
            line.push(',');
            line.push_str(&fmt_f64(r.gain));
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}

pub(super) fn random_info<R: Rng>(g: &GeneratorMapping, rng: &mut R) -> Vec<u8> {
    (0..g.n_info())
        .map(|_| rng.random::<bool>() as u8)
        .collect()
}

/// Simulates `cfg.n_records` transmissions over the configured code.
///
/// Record `i` draws its info word and noise from its own substream, so the
/// output does not depend on the thread count. Fading gains come from one
/// sequential stream because successive records are correlated.
pub fn generate_dataset(
    h: &ParityCheckMatrix,
    cfg: &GenerationConfig,
) -> Result<Dataset, ChannelError> {
    cfg.validate()?;
    let g = derive_generator(h)?;
    let sub = extract_subcode(h, cfg.subcode_fraction, RowSelection::Prefix)?;
    let gains = fading_gains(
        cfg.channel.fading,
        cfg.n_records,
        &mut substream(cfg.seed, Domain::Fading, 0),
    );
    let sub_cfg = MinSumConfig::new(cfg.vnr_iters, cfg.vnr_iters);
    let full_cfg = MinSumConfig::new(cfg.full_decode_iters, 0);

    let records = (0..cfg.n_records)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, Domain::Record, i as u64);
            let info = random_info(&g, &mut rng);
            let cw = encode(&g, &info)?;
            let rx = transmit_with_gain(&cw, &cfg.channel, gains[i], &mut rng)?;
            let sub_trace =
                min_sum_decode(sub.matrix(), &sub.restrict(&rx.channel_llrs), &sub_cfg)?;
            let vnr = vnr_sequence(&sub_trace).expect("subcode trace is never empty");
            let full = min_sum_decode(h, &rx.channel_llrs, &full_cfg)?;
            let eucd = euclidean_distance(&rx.rx_symbols, &rx.tx_symbols)
                .expect("symbol vectors share a length");
            Ok(TransmissionRecord {
                idx: i as u64,
                label: u8::from(full.hard_decision != cw),
                vnr,
                eucd,
                gain: rx.block_gain,
            })
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;

    let n_errors = records.iter().filter(|r| r.label == 1).count() as u64;
    let p = Proportion::wilson(n_errors, records.len() as u64, Z_95);
    log::info!(
        "generated {} records at {} dB: BLER {:.3e} [{:.3e}, {:.3e}]",
        records.len(),
        cfg.channel.snr_db,
        p.estimate,
        p.lo,
        p.hi
    );
    Ok(Dataset {
        summary: DatasetSummary {
            n_records: p.trials,
            n_errors,
            bler: p.estimate,
            bler_ci95_lo: p.lo,
            bler_ci95_hi: p.hi,
            snr_db: cfg.channel.snr_db,
            code_length: h.n_vars(),
            subcode_rows: sub.row_subset().len(),
            subcode_vars: sub.var_subset().len(),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Fading, Modulation};

    fn config(snr_db: f64, n_records: usize, seed: u64) -> GenerationConfig {
        GenerationConfig {
            channel: ChannelConfig::awgn(snr_db, Modulation::Qpsk),
            code: CodeSource::default(),
            subcode_fraction: 5.0 / 6.0,
            vnr_iters: 5,
            full_decode_iters: 50,
            n_records,
            seed,
        }
    }

    #[test]
    fn noiseless_and_pure_noise_limits() {
        let h = CodeSource::default().load().unwrap();
        let clean = generate_dataset(&h, &config(50.0, 1000, 1)).unwrap();
        assert_eq!(clean.summary.n_errors, 0);
        assert!(clean.records.iter().all(|r| r.vnr.len() == 6));
        let noise = generate_dataset(&h, &config(-50.0, 1000, 1)).unwrap();
        assert!(noise.summary.bler > 0.99, "{}", noise.summary.bler);
    }

    #[test]
    fn same_config_gives_identical_bytes() {
        let h = CodeSource::default().load().unwrap();
        let mut cfg = config(2.0, 300, 77);
        cfg.channel.fading = Fading::BlockAr1 { rho: 0.9 };
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_dataset(&h, &cfg)
            .unwrap()
            .write_csv(&mut a)
            .unwrap();
        generate_dataset(&h, &cfg)
            .unwrap()
            .write_csv(&mut b)
            .unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("idx,label,vnr_0,vnr_1,vnr_2,vnr_3,vnr_4,vnr_5,eucd,gain\n"));
    }

    #[test]
    fn labels_are_serially_uncorrelated_without_fading() {
        let h = CodeSource::default().load().unwrap();
        let ds = generate_dataset(&h, &config(1.0, 4000, 3)).unwrap();
        let x: Vec<f64> = ds.records.iter().map(|r| r.label as f64).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        assert!(
            mean > 0.05 && mean < 0.95,
            "BLER {mean} too extreme for the test"
        );
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let r1 = cov / var;
        assert!(r1.abs() < 3.0 / n.sqrt(), "lag-1 autocorrelation {r1}");
    }

    #[test]
    fn rejects_inconsistent_iteration_counts() {
        let h = CodeSource::default().load().unwrap();
        let mut cfg = config(2.0, 10, 1);
        cfg.vnr_iters = 60;
        assert!(matches!(
            generate_dataset(&h, &cfg),
            Err(ChannelError::Config(_))
        ));
    }
}
