//! The JSON experiment file. Every stage has defaults, so `{}` is a valid
//! configuration. Relative paths inside a stage are resolved against the
//! output directory.

use std::path::{Path, PathBuf};

use eharq::channel::{CalibrationOptions, ChannelConfig, CodeSource, Modulation};
use eharq::classifiers::{LrConfig, SaeTrainConfig};
use eharq::system::{Load, P1Form, Tti};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub generate: GenerateStage,
    pub train: TrainStage,
    pub eval: EvalStage,
    pub system: SystemStage,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            out: PathBuf::from("out"),
            generate: GenerateStage::default(),
            train: TrainStage::default(),
            eval: EvalStage::default(),
            system: SystemStage::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if cfg.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError(format!(
                "{}: unsupported format_version {}",
                path.display(),
                cfg.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    /// Resolves an input path and checks that it exists.
    pub fn input(&self, p: &Path) -> Result<PathBuf, ConfigError> {
        let full = self.resolve(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(ConfigError(format!(
                "input file {} does not exist",
                full.display()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateStage {
    pub channel: ChannelConfig,
    pub code: CodeSource,
    pub subcode_fraction: f64,
    pub vnr_iters: usize,
    pub full_decode_iters: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Calibrate the SNR to this full-code BLER before generating.
    pub target_bler: Option<f64>,
    pub calibration: CalibrationOptions,
}

impl Default for GenerateStage {
    fn default() -> Self {
        GenerateStage {
            channel: ChannelConfig::awgn(3.0, Modulation::Qpsk),
            code: CodeSource::default(),
            subcode_fraction: 0.5,
            vnr_iters: 5,
            full_decode_iters: 50,
            n_train: 100_000,
            n_validation: 100_000,
            n_test: 100_000,
            target_bler: None,
            calibration: CalibrationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Ht0,
    Ht5,
    Lr {
        #[serde(default)]
        config: LrConfig,
    },
    Sae {
        #[serde(default)]
        config: SaeTrainConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainStage {
    pub dataset: PathBuf,
    /// Used for early stopping of the autoencoder.
    pub validation: Option<PathBuf>,
    pub classifier: ClassifierSpec,
    /// Feature columns for LR and SAE; history columns such as `h5_vnr0`
    /// are derived on the fly.
    pub features: Vec<String>,
    pub model: PathBuf,
    pub log: PathBuf,
}

pub fn default_features() -> Vec<String> {
    (0..=5).map(|j| format!("vnr_{j}")).collect()
}

impl Default for TrainStage {
    fn default() -> Self {
        TrainStage {
            dataset: "train.csv".into(),
            validation: None,
            classifier: ClassifierSpec::Lr {
                config: LrConfig::default(),
            },
            features: default_features(),
            model: "model.json".into(),
            log: "train_log.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalStage {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub fnr_eval: f64,
    /// Retransmission budget for the effective-BLER sweep.
    pub n_retx: usize,
    pub curve: PathBuf,
    pub summary: PathBuf,
    pub harq_sweep: PathBuf,
}

impl Default for EvalStage {
    fn default() -> Self {
        EvalStage {
            model: "model.json".into(),
            dataset: "test.csv".into(),
            fnr_eval: 8e-4,
            n_retx: 2,
            curve: "curve.csv".into(),
            summary: "eval.json".into(),
            harq_sweep: "harq_sweep.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSource {
    /// A curve written by `eval`.
    File { path: PathBuf },
    /// Synthetic binormal scores with the given separation.
    Binormal { separation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub name: String,
    pub curve: CurveSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub load: Load,
    pub tti: Tti,
    pub p_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemStage {
    pub schemes: Vec<SchemeSpec>,
    pub scenarios: Vec<ScenarioSpec>,
    pub fnr_lo: f64,
    pub fnr_hi: f64,
    pub grid_points: usize,
    /// Operating point used when a sweep has no interior optimum.
    pub fnr_eval: f64,
    pub p1_form: P1Form,
    pub regular_baseline: bool,
    pub sim_slots: usize,
}

impl Default for SystemStage {
    fn default() -> Self {
        let scenario = |load, tti, name: &str| ScenarioSpec {
            name: name.into(),
            load,
            tti,
            p_e: 0.004742,
        };
        SystemStage {
            schemes: vec![SchemeSpec {
                name: "binormal".into(),
                curve: CurveSource::Binormal { separation: 6.0 },
            }],
            scenarios: vec![
                scenario(Load::Medium, Tti::Long, "medium_long"),
                scenario(Load::High, Tti::Long, "high_long"),
                scenario(Load::Medium, Tti::Short, "medium_short"),
                scenario(Load::High, Tti::Short, "high_short"),
            ],
            fnr_lo: 1e-4,
            fnr_hi: 1e-1,
            grid_points: 25,
            fnr_eval: 8e-4,
            p1_form: P1Form::Lemma1,
            regular_baseline: true,
            sim_slots: 1_000_000,
        }
    }
}
