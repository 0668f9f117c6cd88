use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::resource::PropagationOptions;
use super::schedule::{packet_failure_prob, P1Form};
use super::sim::simulate_system;
use super::{SystemConfig, SystemError};
use crate::io::fmt_f64;
use crate::metrics::CurveSet;

/// Operating points of a binormal score model: positives are shifted by
/// `separation` standard deviations, so `fpr = Q(Phi^-1(fnr) + separation)`.
/// The `fnr` values are spaced logarithmically from `fnr_lo` to `fnr_hi`.
pub fn binormal_operating_points(
    separation: f64,
    fnr_lo: f64,
    fnr_hi: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let std = Normal::standard();
    let (a, b) = (fnr_lo.ln(), fnr_hi.ln());
    (0..n)
        .map(|i| {
            let f = if n == 1 {
                0.0
            } else {
                i as f64 / (n - 1) as f64
            };
            let fnr = (a + f * (b - a)).exp();
            let fpr = std.sf(std.inverse_cdf(fnr) + separation);
            (fnr, fpr)
        })
        .collect()
}

/// `(fnr, fpr)` of every point on a measured curve.
pub fn operating_points(curve: &CurveSet) -> Vec<(f64, f64)> {
    curve.points.iter().map(|p| (p.fnr, p.fpr)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub slots: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub propagation: PropagationOptions,
    pub p1_form: P1Form,
    pub simulate: Option<SimulationSettings>,
}

/// One operating point. Analytic values are missing where the resource
/// distribution does not converge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSweepRow {
    pub fnr: f64,
    pub fpr: f64,
    pub p_pf_analytic: Option<f64>,
    pub p_pf_sim: Option<f64>,
    pub p_pf_sim_ci_lo: Option<f64>,
    pub p_pf_sim_ci_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSweep {
    /// Sorted by `fnr`, duplicates removed.
    pub rows: Vec<SystemSweepRow>,
    /// Row with the smallest analytic failure probability.
    pub argmin: Option<usize>,
}

impl SystemSweep {
    pub fn minimum(&self) -> Option<&SystemSweepRow> {
        self.argmin.map(|i| &self.rows[i])
    }

    /// The minimum lies strictly below the values at both ends of the
    /// evaluated range.
    pub fn has_interior_minimum(&self) -> bool {
        let valid: Vec<f64> = self.rows.iter().filter_map(|r| r.p_pf_analytic).collect();
        let Some(min) = self.minimum().and_then(|r| r.p_pf_analytic) else {
            return false;
        };
        valid.len() >= 3 && min < valid[0] && min < valid[valid.len() - 1]
    }

    /// The optimum if it is interior; otherwise the row whose `fnr` is
    /// closest to `fnr_eval` on a log scale, flagged with `true`.
    pub fn evaluation_row(&self, fnr_eval: f64) -> Option<(SystemSweepRow, bool)> {
        if self.has_interior_minimum() {
            return self.minimum().map(|r| (*r, false));
        }
        let dist = |r: &SystemSweepRow| (r.fnr.max(1e-300).ln() - fnr_eval.ln()).abs();
        self.rows
            .iter()
            .filter(|r| r.p_pf_analytic.is_some())
            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
            .map(|r| (*r, true))
    }
}

fn evaluate(
    cfg: &SystemConfig,
    fnr: f64,
    fpr: f64,
    opts: &SweepOptions,
) -> Result<SystemSweepRow, SystemError> {
    let point = SystemConfig { fnr, fpr, ..*cfg };
    point.validate()?;
    let analytic = match packet_failure_prob(&point, &opts.propagation, opts.p1_form) {
        Ok(r) => Some(r.p_pf),
        Err(SystemError::NotConverged(msg)) => {
            log::debug!("fnr {fnr:e}, fpr {fpr:e}: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let sim = match opts.simulate {
        Some(s) => Some(simulate_system(&point, s.slots, s.seed)?.p_pf),
        None => None,
    };
    Ok(SystemSweepRow {
        fnr,
        fpr,
        p_pf_analytic: analytic,
        p_pf_sim: sim.map(|p| p.estimate),
        p_pf_sim_ci_lo: sim.map(|p| p.lo),
        p_pf_sim_ci_hi: sim.map(|p| p.hi),
    })
}

/// Analytic (and optionally simulated) packet failure probability at each
/// operating point. The resource distribution is recomputed per point,
/// since the retransmission load depends on `fnr` and `fpr`; repeated
/// points are evaluated once.
pub fn fnr_sweep_system(
    cfg: &SystemConfig,
    points: &[(f64, f64)],
    opts: &SweepOptions,
) -> Result<SystemSweep, SystemError> {
    cfg.validate()?;
    let mut unique: HashMap<(u64, u64), (f64, f64)> = HashMap::new();
    for &(fnr, fpr) in points {
        unique.insert((fnr.to_bits(), fpr.to_bits()), (fnr, fpr));
    }
    let mut keys: Vec<(f64, f64)> = unique.into_values().collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let rows = keys
        .par_iter()
        .map(|&(fnr, fpr)| evaluate(cfg, fnr, fpr, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let argmin = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.p_pf_analytic.map(|p| (i, p)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    Ok(SystemSweep { rows, argmin })
}

/// Writes `fnr,fpr,p_pf_analytic,p_pf_sim,p_pf_sim_ci_lo,p_pf_sim_ci_hi`;
/// missing values are left empty.
pub fn write_sweep_csv(rows: &[SystemSweepRow], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "fnr,fpr,p_pf_analytic,p_pf_sim,p_pf_sim_ci_lo,p_pf_sim_ci_hi"
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.fnr),
            fmt_f64(r.fpr),
            opt(r.p_pf_analytic),
            opt(r.p_pf_sim),
            opt(r.p_pf_sim_ci_lo),
            opt(r.p_pf_sim_ci_hi)
        )?;
    }
    out.flush()
}

/// `t_s = sum_t log10(P[s][t] / min_s P[s][t])` for each scheme `s` (row)
/// over scenarios `t` (columns).
pub fn total_score(table: &[Vec<f64>]) -> Result<Vec<f64>, SystemError> {
    let n_cols = table.first().map(Vec::len).ok_or(SystemError::Shape)?;
    if n_cols == 0 || table.iter().any(|r| r.len() != n_cols) {
        return Err(SystemError::Shape);
    }
    if let Some(&bad) = table.iter().flatten().find(|v| !(**v > 0.0)) {
        return Err(SystemError::NonPositive(bad));
    }
    let mins: Vec<f64> = (0..n_cols)
        .map(|t| table.iter().map(|r| r[t]).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(table
        .iter()
        .map(|r| r.iter().zip(&mins).map(|(v, m)| (v / m).log10()).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Load, Scheme, Tti};

    #[test]
    fn total_score_examples() {
        let best = vec![1e-5, 2e-5, 3e-6, 4e-4, 1e-6, 7e-5, 2e-5];
        let worse: Vec<f64> = best.iter().map(|v| v * 10.0).collect();
        let s = total_score(&[best, worse]).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 7.0).abs() < 1e-12);
        assert_eq!(
            total_score(&[vec![1.0, 0.0]]),
            Err(SystemError::NonPositive(0.0))
        );
        assert_eq!(
            total_score(&[vec![1.0], vec![1.0, 2.0]]),
            Err(SystemError::Shape)
        );
        assert_eq!(total_score(&[]), Err(SystemError::Shape));
    }

    #[test]
    fn printed_high_load_scores_are_reproduced() {
        // scenarios by row; columns: regular, HT0, HT5, LR, SAE
        let by_scenario = [
            [2.72e-4, 5.75e-5, 5.87e-5, 5.20e-5, 5.17e-5],
            [1.60e-4, 3.99e-5, 4.13e-5, 3.78e-5, 3.83e-5],
            [9.56e-5, 2.94e-5, 2.88e-5, 2.76e-5, 2.81e-5],
            [2.72e-4, 5.59e-5, 4.99e-5, 4.89e-5, 4.70e-5],
            [1.61e-5, 2.05e-5, 1.61e-5, 1.65e-5, 1.68e-5],
            [9.32e-6, 1.33e-5, 1.30e-5, 1.29e-5, 1.28e-5],
            [1.60e-4, 3.88e-5, 4.06e-5, 3.64e-5, 3.64e-5],
        ];
        let table: Vec<Vec<f64>> = (0..5)
            .map(|s| by_scenario.iter().map(|row| row[s]).collect())
            .collect();
        let printed = [3.2918, 0.4599, 0.3306, 0.1713, 0.1703];
        for (got, want) in total_score(&table).unwrap().iter().zip(printed) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn binormal_points_follow_the_separation() {
        let pts = binormal_operating_points(3.0, 1e-4, 1e-1, 4);
        assert!((pts[0].0 - 1e-4).abs() < 1e-18 && (pts[3].0 - 0.1).abs() < 1e-15);
        assert!((pts[1].0 - 1e-3).abs() < 1e-15);
        assert!(pts.windows(2).all(|w| w[1].1 < w[0].1));
        let flat = binormal_operating_points(0.0, 0.2, 0.2, 1);
        assert!((flat[0].1 - 0.8).abs() < 1e-9);
    }

    #[test]
    fn without_false_alarms_lower_fnr_never_hurts() {
        let cfg = SystemConfig::preset(Load::High, Tti::Long, Scheme::Early, 0.01, 0.0, 0.0);
        let pts: Vec<(f64, f64)> = binormal_operating_points(2.0, 1e-4, 1e-1, 12)
            .into_iter()
            .map(|(f, _)| (f, 0.0))
            .collect();
        let sweep = fnr_sweep_system(&cfg, &pts, &SweepOptions::default()).unwrap();
        let p: Vec<f64> = sweep
            .rows
            .iter()
            .map(|r| r.p_pf_analytic.unwrap())
            .collect();
        assert!(p.windows(2).all(|w| w[0] <= w[1] + 1e-15));
        assert_eq!(sweep.argmin, Some(0));
        assert!(!sweep.has_interior_minimum());
    }

    #[test]
    fn duplicate_points_collapse_and_rows_are_sorted() {
        let cfg = SystemConfig::preset(Load::Medium, Tti::Long, Scheme::Early, 0.01, 0.0, 0.0);
        let pts = [(0.1, 0.01), (0.01, 0.05), (0.1, 0.01)];
        let sweep = fnr_sweep_system(&cfg, &pts, &SweepOptions::default()).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        assert_eq!(sweep.rows[0].fnr, 0.01);
        let (row, flagged) = sweep.evaluation_row(8e-4).unwrap();
        assert!(flagged);
        assert_eq!(row.fnr, 0.01);
    }
}
