//! Confusion counts, precision-recall and FNR-FPR curves.
//!
//! Positive means block error. A record is predicted positive when its score
//! is at least the threshold, so raising the threshold can only move records
//! from predicted-positive to predicted-negative.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{fmt_f64, TableError};
use crate::stats::wilson_interval;

/// Positive counts below this make FNR estimates unreliable.
pub const LOW_CONFIDENCE_POSITIVES: u64 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("{0} scores but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("score {0} is NaN")]
    NanScore(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub theta: f64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tp: u64,
    pub tn: u64,
    pub fnr: f64,
    pub fpr: f64,
    /// 1 when nothing is predicted positive.
    pub precision: f64,
    pub recall: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl OperatingPoint {
    pub fn from_counts(theta: f64, fn_: u64, fp: u64, tp: u64, tn: u64) -> Self {
        OperatingPoint {
            theta,
            fn_,
            fp,
            tp,
            tn,
            fnr: ratio(fn_, fn_ + tp),
            fpr: ratio(fp, fp + tn),
            precision: if tp + fp == 0 {
                1.0
            } else {
                ratio(tp, tp + fp)
            },
            recall: ratio(tp, fn_ + tp),
        }
    }

    pub fn fnr_interval(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.fn_, self.fn_ + self.tp, z)
    }

    pub fn fpr_interval(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.fp, self.fp + self.tn, z)
    }

    /// Too few positives for a trustworthy FNR.
    pub fn low_confidence(&self) -> bool {
        self.fn_ + self.tp < LOW_CONFIDENCE_POSITIVES
    }
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(MetricsError::NanScore(i));
    }
    Ok(())
}

pub fn confusion_at_threshold(
    scores: &[f64],
    labels: &[u8],
    theta: f64,
) -> Result<OperatingPoint, MetricsError> {
    check(scores, labels)?;
    let (mut fn_, mut fp, mut tp, mut tn) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= theta, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(OperatingPoint::from_counts(theta, fn_, fp, tp, tn))
}

/// All operating points of a score ranking, plus average precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    /// Ascending in `theta`; the last point has `theta = +inf`.
    pub points: Vec<OperatingPoint>,
    pub auc_pr: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

/// Builds one point per distinct score (ties move together) and the
/// average precision `sum (R_i - R_{i-1}) P_i` over descending thresholds.
pub fn pr_curve_and_auc(scores: &[f64], labels: &[u8]) -> Result<CurveSet, MetricsError> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y != 0).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![OperatingPoint::from_counts(
        f64::INFINITY,
        n_pos,
        0,
        0,
        n_neg,
    )];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let theta = scores[order[i]];
        while i < order.len() && scores[order[i]] == theta {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let p = OperatingPoint::from_counts(theta, n_pos - tp, fp, tp, n_neg - fp);
        auc += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
        points.push(p);
    }
    points.reverse();
    Ok(CurveSet {
        points,
        auc_pr: auc,
        n_pos,
        n_neg,
    })
}

/// Same points as [`pr_curve_and_auc`]; named for its use as an
/// FNR-versus-FPR trade-off curve.
pub fn fnr_fpr_curve(scores: &[f64], labels: &[u8]) -> Result<CurveSet, MetricsError> {
    pr_curve_and_auc(scores, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub point: OperatingPoint,
    /// No point meets the target; `point` has the smallest FNR instead.
    pub unreachable: bool,
    /// The target is positive but finer than one positive record.
    pub below_resolution: bool,
}

/// Largest threshold whose FNR does not exceed `target`.
pub fn threshold_for_target_fnr(curve: &CurveSet, target: f64) -> ThresholdChoice {
    let below_resolution = target > 0.0 && target < 1.0 / curve.n_pos as f64;
    match curve.points.iter().rev().find(|p| p.fnr <= target) {
        Some(p) => ThresholdChoice {
            point: *p,
            unreachable: false,
            below_resolution,
        },
        None => {
            let best = curve
                .points
                .iter()
                .rev()
                .min_by(|a, b| a.fnr.total_cmp(&b.fnr))
                .copied()
                .expect("curves are never empty");
            ThresholdChoice {
                point: best,
                unreachable: true,
                below_resolution,
            }
        }
    }
}

impl CurveSet {
    /// Writes `theta,fn,fp,tp,tn,fnr,fpr,precision,recall`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,fn,fp,tp,tn,fnr,fpr,precision,recall")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(p.theta),
                p.fn_,
                p.fp,
                p.tp,
                p.tn,
                fmt_f64(p.fnr),
                fmt_f64(p.fpr),
                fmt_f64(p.precision),
                fmt_f64(p.recall)
            )?;
        }
        w.flush()
    }

    /// Reads the output of [`CurveSet::write_csv`]. Rates are recomputed
    /// from the counts and the average precision from the points.
    pub fn read_csv<R: Read>(r: R) -> Result<CurveSet, TableError> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TableError::MissingColumn(name.to_string()))
        };
        let cols = [
            col("theta")?,
            col("fn")?,
            col("fp")?,
            col("tp")?,
            col("tn")?,
        ];
        let mut points = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim().to_string();
            let bad = |k: usize| TableError::Parse {
                line: i + 2,
                column: header[cols[k]].clone(),
                value: field(k),
            };
            let theta: f64 = field(0).parse().map_err(|_| bad(0))?;
            let mut counts = [0u64; 4];
            for (k, c) in counts.iter_mut().enumerate() {
                *c = field(k + 1).parse().map_err(|_| bad(k + 1))?;
            }
            points.push(OperatingPoint::from_counts(
                theta, counts[0], counts[1], counts[2], counts[3],
            ));
        }
        points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        let first = points.last().ok_or(TableError::NoCompleteRows)?;
        let (n_pos, n_neg) = (first.tp + first.fn_, first.fp + first.tn);
        let mut auc = 0.0;
        let mut prev_recall = 0.0;
        for p in points.iter().rev().skip(1) {
            auc += (p.recall - prev_recall) * p.precision;
            prev_recall = p.recall;
        }
        Ok(CurveSet {
            points,
            auc_pr: auc,
            n_pos,
            n_neg,
        })
    }

    pub fn summary(&self) -> CurveSummary {
        CurveSummary {
            auc_pr: self.auc_pr,
            n_pos: self.n_pos,
            n_neg: self.n_neg,
            n_points: self.points.len(),
            low_confidence: self.n_pos < LOW_CONFIDENCE_POSITIVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub auc_pr: f64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_points: usize,
    pub low_confidence: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const S: [f64; 4] = [0.2, 0.6, 0.7, 0.9];
    const Y: [u8; 4] = [0, 0, 1, 1];

    #[test]
    fn confusion_examples() {
        let p = confusion_at_threshold(&S, &Y, 0.65).unwrap();
        assert_eq!((p.fn_, p.fp), (0, 0));
        let p = confusion_at_threshold(&S, &Y, 0.95).unwrap();
        assert_eq!(p.fn_, 2);
        assert_eq!(p.fnr, 1.0);
        let p = confusion_at_threshold(&S, &Y, f64::NEG_INFINITY).unwrap();
        assert_eq!((p.fpr, p.fnr), (1.0, 0.0));
        assert_eq!(
            confusion_at_threshold(&[], &[], 0.0),
            Err(MetricsError::Empty)
        );
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(pr_curve_and_auc(&S, &Y).unwrap().auc_pr, 1.0);
        assert_eq!(pr_curve_and_auc(&[0.9, 0.8], &[0, 1]).unwrap().auc_pr, 0.5);
        assert_eq!(
            pr_curve_and_auc(&[0.1, 0.2], &[1, 1]),
            Err(MetricsError::SingleClass)
        );
    }

    #[test]
    fn random_scores_give_prevalence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let pi = 0.1;
        let labels: Vec<u8> = (0..n).map(|_| rng.random_bool(pi) as u8).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ap = pr_curve_and_auc(&scores, &labels).unwrap().auc_pr;
        let sigma = (pi * (1.0 - pi) / n as f64).sqrt();
        assert!((ap - pi).abs() < 3.0 * sigma + 2e-3, "AP {ap}");
    }

    #[test]
    fn perfect_and_reversed_rankings() {
        let c = fnr_fpr_curve(&S, &Y).unwrap();
        assert!(c.points.iter().any(|p| p.fnr == 0.0 && p.fpr == 0.0));
        let rev: Vec<f64> = S.iter().map(|s| -s).collect();
        let c = fnr_fpr_curve(&rev, &Y).unwrap();
        for p in &c.points {
            let b = confusion_at_threshold(&rev, &Y, p.theta).unwrap();
            assert_eq!(*p, b);
            // every negative outranks every positive
            assert!(p.fnr == 1.0 || p.fpr == 1.0);
        }
        let c = fnr_fpr_curve(&[0.5, 0.5, 0.5], &[0, 1, 0]).unwrap();
        assert_eq!(c.points.len(), 2);
    }

    #[test]
    fn threshold_selection() {
        let c = fnr_fpr_curve(&S, &Y).unwrap();
        let t = threshold_for_target_fnr(&c, 1.0);
        assert_eq!(t.point.theta, f64::INFINITY);
        let t = threshold_for_target_fnr(&c, 0.0);
        assert_eq!((t.point.fnr, t.point.fpr), (0.0, 0.0));
        assert!(!t.unreachable);

        let scores = [0.1, 0.9, 0.2, 0.3];
        let labels = [1, 1, 0, 0];
        let c = fnr_fpr_curve(&scores, &labels).unwrap();
        let t = threshold_for_target_fnr(&c, 0.1);
        assert!(t.below_resolution);
        assert_eq!(t.point.theta, 0.1);
    }

    proptest! {
        #[test]
        fn curve_is_monotone_and_consistent(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 4.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1 as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let c = fnr_fpr_curve(&scores, &labels).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[0].theta < w[1].theta);
                prop_assert!(w[0].fnr <= w[1].fnr);
                prop_assert!(w[0].fpr >= w[1].fpr);
            }
            for p in &c.points {
                prop_assert_eq!(*p, confusion_at_threshold(&scores, &labels, p.theta).unwrap());
            }
            // strictly monotone transform leaves AP unchanged
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            let a = c.auc_pr;
            let b = pr_curve_and_auc(&t, &labels).unwrap().auc_pr;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let scores = [0.9, 0.1, 0.4, 0.4, 0.8, 0.3, 0.7];
        let labels = [1, 0, 1, 0, 0, 0, 1];
        let c = pr_curve_and_auc(&scores, &labels).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = CurveSet::read_csv(&buf[..]).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!((back.n_pos, back.n_neg), (3, 4));
        assert!((back.auc_pr - c.auc_pr).abs() < 1e-15);
        assert!(CurveSet::read_csv(&b"theta,fp\n"[..]).is_err());
    }
}
