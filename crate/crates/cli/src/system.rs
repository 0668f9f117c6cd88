use std::fs::File;
use std::io::{BufReader, Write};

use anyhow::Context;
use eharq::io::fmt_f64;
use eharq::metrics::{threshold_for_target_fnr, CurveSet};
use eharq::rng::derive_seed;
use eharq::system::{
    binormal_operating_points, fnr_sweep_system, packet_failure_prob, simulate_system, total_score,
    write_sweep_csv, PropagationOptions, Scheme, SimulationSettings, SweepOptions, SystemConfig,
    SystemError,
};
use serde::Serialize;

use crate::config::{CurveSource, ExperimentConfig, SchemeSpec, SystemStage};
use crate::{config_error, write_json, Flags};

pub const REGULAR: &str = "regular";

#[derive(Debug, Clone, Serialize)]
struct Entry {
    scheme: String,
    scenario: String,
    /// `false` when the resource distribution diverged at every point.
    converged: bool,
    fnr: f64,
    fpr: f64,
    p_pf_analytic: Option<f64>,
    p_pf_sim: Option<f64>,
    p_pf_sim_ci_lo: Option<f64>,
    p_pf_sim_ci_hi: Option<f64>,
    /// No interior optimum; evaluated at the point nearest `fnr_eval`.
    at_fnr_eval: bool,
}

#[derive(Serialize)]
struct Score {
    scheme: String,
    total_score: f64,
}

#[derive(Serialize)]
struct SystemReport {
    entries: Vec<Entry>,
    /// Scenarios where every scheme has an analytic value.
    scored_scenarios: Vec<String>,
    scores: Vec<Score>,
}

fn operating_points(
    cfg: &ExperimentConfig,
    stage: &SystemStage,
    scheme: &SchemeSpec,
) -> anyhow::Result<Vec<(f64, f64)>> {
    match &scheme.curve {
        CurveSource::Binormal { separation } => {
            let mut pts = binormal_operating_points(
                *separation,
                stage.fnr_lo,
                stage.fnr_hi,
                stage.grid_points,
            );
            pts.extend(binormal_operating_points(
                *separation,
                stage.fnr_eval,
                stage.fnr_eval,
                1,
            ));
            Ok(pts)
        }
        CurveSource::File { path } => {
            let path = cfg.input(path)?;
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let curve = CurveSet::read_csv(BufReader::new(file))
                .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            let targets =
                binormal_operating_points(0.0, stage.fnr_lo, stage.fnr_hi, stage.grid_points);
            Ok(targets
                .iter()
                .map(|t| t.0)
                .chain([stage.fnr_eval])
                .map(|t| {
                    let p = threshold_for_target_fnr(&curve, t).point;
                    (p.fnr, p.fpr)
                })
                .collect())
        }
    }
}

fn write_entries_csv(path: &std::path::Path, entries: &[Entry]) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "scheme,scenario,converged,fnr,fpr,p_pf_analytic,p_pf_sim,p_pf_sim_ci_lo,p_pf_sim_ci_hi,at_fnr_eval"
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            e.scheme,
            e.scenario,
            e.converged,
            fmt_f64(e.fnr),
            fmt_f64(e.fpr),
            opt(e.p_pf_analytic),
            opt(e.p_pf_sim),
            opt(e.p_pf_sim_ci_lo),
            opt(e.p_pf_sim_ci_hi),
            e.at_fnr_eval
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn run(cfg: &ExperimentConfig, flags: &Flags) -> anyhow::Result<()> {
    let stage = &cfg.system;
    if stage.scenarios.is_empty() || (stage.schemes.is_empty() && !stage.regular_baseline) {
        return Err(config_error("system stage needs scenarios and schemes"));
    }
    let simulate = flags.simulate.then(|| SimulationSettings {
        slots: flags.n.unwrap_or(stage.sim_slots),
        seed: derive_seed(cfg.seed, 30),
    });
    let opts = SweepOptions {
        propagation: PropagationOptions::default(),
        p1_form: stage.p1_form,
        simulate,
    };
    let as_config = |e: SystemError| match e {
        SystemError::Config(_) => config_error(e.to_string()),
        other => other.into(),
    };

    let mut entries = Vec::new();
    for sc in &stage.scenarios {
        if stage.regular_baseline {
            let reg = SystemConfig::preset(sc.load, sc.tti, Scheme::Regular, sc.p_e, 0.0, 0.0);
            reg.validate().map_err(as_config)?;
            let analytic = match packet_failure_prob(&reg, &opts.propagation, opts.p1_form) {
                Ok(r) => Some(r.p_pf),
                Err(SystemError::NotConverged(_)) => None,
                Err(e) => return Err(e.into()),
            };
            let sim = match simulate {
                Some(s) => Some(simulate_system(&reg, s.slots, s.seed)?.p_pf),
                None => None,
            };
            entries.push(Entry {
                scheme: REGULAR.into(),
                scenario: sc.name.clone(),
                converged: analytic.is_some(),
                fnr: 0.0,
                fpr: 0.0,
                p_pf_analytic: analytic,
                p_pf_sim: sim.map(|p| p.estimate),
                p_pf_sim_ci_lo: sim.map(|p| p.lo),
                p_pf_sim_ci_hi: sim.map(|p| p.hi),
                at_fnr_eval: false,
            });
        }
        for scheme in &stage.schemes {
            let points = operating_points(cfg, stage, scheme)?;
            let early = SystemConfig::preset(sc.load, sc.tti, Scheme::Early, sc.p_e, 0.0, 0.0);
            let sweep = fnr_sweep_system(&early, &points, &opts).map_err(as_config)?;
            let path = cfg
                .out
                .join(format!("sweep_{}_{}.csv", scheme.name, sc.name));
            write_sweep_csv(&sweep.rows, &path)?;
            let entry = match sweep.evaluation_row(stage.fnr_eval) {
                Some((row, at_eval)) => Entry {
                    scheme: scheme.name.clone(),
                    scenario: sc.name.clone(),
                    converged: true,
                    fnr: row.fnr,
                    fpr: row.fpr,
                    p_pf_analytic: row.p_pf_analytic,
                    p_pf_sim: row.p_pf_sim,
                    p_pf_sim_ci_lo: row.p_pf_sim_ci_lo,
                    p_pf_sim_ci_hi: row.p_pf_sim_ci_hi,
                    at_fnr_eval: at_eval,
                },
                None => {
                    log::warn!(
                        "{} / {}: no converged operating point",
                        scheme.name,
                        sc.name
                    );
                    Entry {
                        scheme: scheme.name.clone(),
                        scenario: sc.name.clone(),
                        converged: false,
                        fnr: f64::NAN,
                        fpr: f64::NAN,
                        p_pf_analytic: None,
                        p_pf_sim: None,
                        p_pf_sim_ci_lo: None,
                        p_pf_sim_ci_hi: None,
                        at_fnr_eval: false,
                    }
                }
            };
            entries.push(entry);
        }
    }

    let mut schemes: Vec<String> = Vec::new();
    if stage.regular_baseline {
        schemes.push(REGULAR.into());
    }
    schemes.extend(stage.schemes.iter().map(|s| s.name.clone()));
    let value = |scheme: &str, scenario: &str| {
        entries
            .iter()
            .find(|e| e.scheme == scheme && e.scenario == scenario)
            .and_then(|e| e.p_pf_analytic)
    };
    let scored: Vec<String> = stage
        .scenarios
        .iter()
        .map(|s| s.name.clone())
        .filter(|sc| {
            schemes
                .iter()
                .all(|s| value(s, sc).is_some_and(|v| v > 0.0))
        })
        .collect();
    let scores = if scored.is_empty() {
        Vec::new()
    } else {
        let table: Vec<Vec<f64>> = schemes
            .iter()
            .map(|s| scored.iter().map(|sc| value(s, sc).unwrap()).collect())
            .collect();
        let t = total_score(&table)?;
        schemes
            .iter()
            .zip(t)
            .map(|(s, t)| Score {
                scheme: s.clone(),
                total_score: t,
            })
            .collect()
    };
    for s in &scores {
        println!("{:<16} t_s = {:.4}", s.scheme, s.total_score);
    }
    write_entries_csv(&cfg.out.join("scores.csv"), &entries)?;
    write_json(
        &cfg.out.join("scores.json"),
        &SystemReport {
            entries,
            scored_scenarios: scored,
            scores,
        },
    )
}
