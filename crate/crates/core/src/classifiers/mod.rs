//! Decodability predictors that emit a block-error score per record.
//!
//! Every model maps a feature row to a real score where larger means "more
//! likely to fail"; the threshold is picked afterwards from a curve.

mod logistic;
pub mod sae;

pub use logistic::{fit_logistic_regression, LrConfig, LrModel};
pub use sae::{
    fit_sae, gradient_check, loss_gradients, sae_forward, GradCheck, LossParts, LossWeights, Mode,
    SaeModel, SaeTrainConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set has {0} rows; at least 2 are needed")]
    TooFewRows(usize),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("training diverged at epoch {epoch}: reconstruction {rec}, cross-entropy {ce}")]
    Diverged { epoch: usize, rec: f64, ce: f64 },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
}

pub(crate) fn check_rows(x: &[Vec<f64>], y: &[u8]) -> Result<usize, ClassifierError> {
    if x.len() != y.len() {
        return Err(ClassifierError::Config(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(ClassifierError::TooFewRows(x.len()));
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ClassifierError::DimensionMismatch {
            expected: d,
            got: r.len(),
        });
    }
    if !(y.contains(&0) && y.iter().any(|&v| v != 0)) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(d)
}

/// Per-feature standardisation fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub scale: Vec<f64>,
}

pub fn fit_scaler(x: &[Vec<f64>]) -> Result<StandardScaler, ClassifierError> {
    if x.len() < 2 {
        return Err(ClassifierError::TooFewRows(x.len()));
    }
    let d = x[0].len();
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        if row.len() != d {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let sd = (s / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                log::warn!("feature {j} has zero variance; it is only centred");
                1.0
            }
        })
        .collect();
    Ok(StandardScaler { mean, scale })
}

impl StandardScaler {
    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if row.len() != self.mean.len() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.mean.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassifierError> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Which VNR a hard-threshold rule reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardThreshold {
    Ht0,
    Ht5,
}

impl HardThreshold {
    pub fn column(self) -> &'static str {
        match self {
            HardThreshold::Ht0 => "vnr_0",
            HardThreshold::Ht5 => "vnr_5",
        }
    }
}

/// The raw VNR is the score.
pub fn hard_threshold_score(vnr: &[f64], which: HardThreshold) -> Result<f64, ClassifierError> {
    let j = match which {
        HardThreshold::Ht0 => 0,
        HardThreshold::Ht5 => 5,
    };
    vnr.get(j)
        .copied()
        .ok_or(ClassifierError::DimensionMismatch {
            expected: j + 1,
            got: vnr.len(),
        })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    HardThreshold { rule: HardThreshold },
    Logistic(LrModel),
    Sae(Box<SaeModel>),
}

/// A fitted classifier with the feature columns and scaling it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub features: Vec<String>,
    pub scaler: Option<StandardScaler>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(features: Vec<String>, scaler: Option<StandardScaler>, model: Model) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            features,
            scaler,
            model,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::FormatVersion(m.format_version).to_string());
        }
        Ok(m)
    }

    /// Scores unscaled feature rows ordered as `self.features`.
    pub fn score(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ClassifierError> {
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.transform(x)?;
                &scaled[..]
            }
            None => x,
        };
        match &self.model {
            Model::HardThreshold { .. } => x
                .iter()
                .map(|r| {
                    r.first()
                        .copied()
                        .ok_or(ClassifierError::DimensionMismatch {
                            expected: 1,
                            got: 0,
                        })
                })
                .collect(),
            Model::Logistic(m) => m.score_batch(x),
            Model::Sae(m) => m.score_batch(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_examples() {
        let s = fit_scaler(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.transform_row(&[1.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(s.transform_row(&[3.0, 7.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(s.transform_row(&[4.0, 5.0]).unwrap(), vec![2.0, 0.0]);
        assert!(fit_scaler(&[vec![1.0]]).is_err());
    }

    #[test]
    fn scaled_training_data_is_standard_and_refit_is_identity() {
        let x: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64 * 0.37 + 4.0, ((i * i) % 17) as f64 - 3.0])
            .collect();
        let s = fit_scaler(&x).unwrap();
        let z = s.transform(&x).unwrap();
        let again = fit_scaler(&z).unwrap();
        for j in 0..2 {
            assert!(again.mean[j].abs() < 1e-8);
            assert!((again.scale[j] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn hard_threshold_reads_the_raw_vnr() {
        let v = [0.3, 0.2, 0.2, 0.1, 0.1, 0.05];
        assert_eq!(hard_threshold_score(&v, HardThreshold::Ht0).unwrap(), 0.3);
        assert_eq!(hard_threshold_score(&v, HardThreshold::Ht5).unwrap(), 0.05);
        assert!(hard_threshold_score(&v[..3], HardThreshold::Ht5).is_err());
    }

    #[test]
    fn separable_vnr5_gives_perfect_auc() {
        use crate::metrics::pr_curve_and_auc;
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![0.5, 0.4, 0.3, 0.3, 0.2, i as f64 / 100.0])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| (r[5] > 0.2) as u8).collect();
        let scores: Vec<f64> = rows
            .iter()
            .map(|r| hard_threshold_score(r, HardThreshold::Ht5).unwrap())
            .collect();
        assert_eq!(pr_curve_and_auc(&scores, &labels).unwrap().auc_pr, 1.0);
    }
}
