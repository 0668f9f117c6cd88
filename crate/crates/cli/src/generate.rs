use std::fs::File;
use std::io::BufWriter;

use anyhow::Context;
use eharq::channel::{
    calibrate_snr, generate_dataset, Calibration, ChannelError, DatasetSummary, GenerationConfig,
};
use eharq::rng::derive_seed;
use serde::Serialize;

use crate::config::{ExperimentConfig, CONFIG_FORMAT_VERSION};
use crate::{config_error, write_json, Flags};

#[derive(Serialize)]
struct Split {
    name: &'static str,
    seed: u64,
    summary: DatasetSummary,
}

#[derive(Serialize)]
struct GenerationReport {
    format_version: u32,
    seed: u64,
    snr_db: f64,
    calibration: Option<Calibration>,
    splits: Vec<Split>,
}

fn classify(e: ChannelError) -> anyhow::Error {
    match e {
        ChannelError::Config(_)
        | ChannelError::OddLength(_)
        | ChannelError::Io { .. }
        | ChannelError::Ldpc(_)
        | ChannelError::InsufficientTrials { .. } => config_error(e.to_string()),
        other => other.into(),
    }
}

pub fn run(cfg: &ExperimentConfig, flags: &Flags) -> anyhow::Result<()> {
    let stage = &cfg.generate;
    let h = stage.code.load().map_err(classify)?;
    let mut channel = stage.channel;
    let mut calibration = None;
    if let Some(target) = stage.target_bler {
        let opts = eharq::channel::CalibrationOptions {
            seed: derive_seed(cfg.seed, 10),
            full_decode_iters: stage.full_decode_iters,
            ..stage.calibration
        };
        let c = calibrate_snr(&h, &channel, target, &opts).map_err(classify)?;
        log::info!("calibrated SNR {:.3} dB for BLER {target:e}", c.snr_db);
        channel.snr_db = c.snr_db;
        calibration = Some(c);
    }

    let sizes = [
        ("train", stage.n_train),
        ("validation", stage.n_validation),
        ("test", stage.n_test),
    ];
    let mut splits = Vec::new();
    for (label, (name, size)) in (1u64..).zip(sizes) {
        let gen = GenerationConfig {
            channel,
            code: stage.code.clone(),
            subcode_fraction: stage.subcode_fraction,
            vnr_iters: stage.vnr_iters,
            full_decode_iters: stage.full_decode_iters,
            n_records: flags.n.unwrap_or(size),
            seed: derive_seed(cfg.seed, label),
        };
        gen.validate().map_err(classify)?;
        let data = generate_dataset(&h, &gen).map_err(classify)?;
        let path = cfg.out.join(format!("{name}.csv"));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        data.write_csv(BufWriter::new(file))?;
        log::info!(
            "{name}: {} records, BLER {:.3e}",
            data.summary.n_records,
            data.summary.bler
        );
        splits.push(Split {
            name,
            seed: gen.seed,
            summary: data.summary,
        });
    }
    write_json(
        &cfg.out.join("summary.json"),
        &GenerationReport {
            format_version: CONFIG_FORMAT_VERSION,
            seed: cfg.seed,
            snr_db: channel.snr_db,
            calibration,
            splits,
        },
    )
}
