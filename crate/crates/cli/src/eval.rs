use std::fs::File;
use std::io::BufWriter;

use eharq::classifiers::ModelFile;
use eharq::harq::{sweep_operating_points, write_sweep_csv, HarqParams};
use eharq::metrics::{pr_curve_and_auc, threshold_for_target_fnr, CurveSummary, ThresholdChoice};
use eharq::stats::Z_95;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{config_error, table, write_json, Flags};

#[derive(Serialize)]
struct EvalReport {
    curve: CurveSummary,
    /// Block error rate of the test set, used as `P_e` in the sweep.
    bler: f64,
    fnr_eval: f64,
    at_fnr_eval: ThresholdChoice,
    fnr_ci95: (f64, f64),
    fpr_ci95: (f64, f64),
}

pub fn run(cfg: &ExperimentConfig, _flags: &Flags) -> anyhow::Result<()> {
    let stage = &cfg.eval;
    let model_path = cfg.input(&stage.model)?;
    let model = ModelFile::from_json(&std::fs::read_to_string(&model_path)?)
        .map_err(|e| config_error(format!("{}: {e}", model_path.display())))?;
    let data = table::load(&cfg.input(&stage.dataset)?)?;
    let sel = table::select(&data, &model.features)?;
    if sel.rows.len() < data.len() {
        log::warn!(
            "{} of {} rows lack a feature and are skipped",
            data.len() - sel.rows.len(),
            data.len()
        );
    }
    let scores = model
        .score(&sel.x)
        .map_err(|e| config_error(e.to_string()))?;
    let curve =
        pr_curve_and_auc(&scores, &sel.y).map_err(|e| config_error(format!("test set: {e}")))?;
    curve.write_csv(BufWriter::new(File::create(cfg.resolve(&stage.curve))?))?;

    let bler = curve.n_pos as f64 / (curve.n_pos + curve.n_neg) as f64;
    let rows = sweep_operating_points(
        &curve,
        &HarqParams::independent(bler, 0.0, 0.0, stage.n_retx),
    );
    write_sweep_csv(
        &rows,
        BufWriter::new(File::create(cfg.resolve(&stage.harq_sweep))?),
    )?;

    let choice = threshold_for_target_fnr(&curve, stage.fnr_eval);
    let summary = curve.summary();
    log::info!(
        "AUC-PR {:.4} over {} positives",
        summary.auc_pr,
        summary.n_pos
    );
    if summary.low_confidence {
        log::warn!("fewer than 100 positives; FNR values are coarse");
    }
    write_json(
        &cfg.resolve(&stage.summary),
        &EvalReport {
            curve: summary,
            bler,
            fnr_eval: stage.fnr_eval,
            at_fnr_eval: choice,
            fnr_ci95: choice.point.fnr_interval(Z_95),
            fpr_ci95: choice.point.fpr_interval(Z_95),
        },
    )
}
