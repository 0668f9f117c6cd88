use eharq::classifiers::{
    fit_logistic_regression, fit_sae, fit_scaler, gradient_check, sae::EpochLoss, ClassifierError,
    HardThreshold, LossWeights, Model, ModelFile, SaeModel, SaeTrainConfig,
};
use eharq::rng::derive_seed;
use serde::Serialize;

use crate::config::{ClassifierSpec, ExperimentConfig};
use crate::{config_error, table, write_json, Flags};

/// Largest gradient-check error accepted before training.
pub const GRADCHECK_LIMIT: f64 = 1e-4;
const GRADCHECK_ROWS: usize = 64;

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TrainLog {
    HardThreshold {
        column: String,
    },
    Logistic {
        converged: bool,
        iterations: usize,
        grad_inf_norm: f64,
        objective: f64,
    },
    Sae {
        epochs: Vec<EpochLoss>,
        gradcheck_max_rel_err: Option<f64>,
    },
}

fn classify(e: ClassifierError) -> anyhow::Error {
    match e {
        ClassifierError::SingleClass
        | ClassifierError::TooFewRows { .. }
        | ClassifierError::DimensionMismatch { .. }
        | ClassifierError::Config(_) => config_error(e.to_string()),
        other => other.into(),
    }
}

fn run_gradcheck(x: &[Vec<f64>], y: &[u8], cfg: &SaeTrainConfig) -> anyhow::Result<f64> {
    // a batch holding both classes when the data allows it
    let of_class = |c: u8| (0..y.len()).filter(move |&i| y[i] == c);
    let mut rows: Vec<usize> = of_class(1).take(GRADCHECK_ROWS / 4).collect();
    rows.extend(of_class(0).take(GRADCHECK_ROWS - rows.len()));
    let xb: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
    let yb: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let model = SaeModel::new(x[0].len(), *cfg);
    let w = LossWeights {
        rec: cfg.lambda_rec,
        ce: 1.0,
    };
    let r = gradient_check(&model, &xb, &yb, w, 1e-5).map_err(classify)?;
    println!(
        "gradient check: max relative error {:.3e} over {} parameters",
        r.max_rel_err, r.n_params
    );
    if r.max_rel_err >= GRADCHECK_LIMIT {
        anyhow::bail!(
            "gradient check failed: {:.3e} >= {GRADCHECK_LIMIT:e}",
            r.max_rel_err
        );
    }
    Ok(r.max_rel_err)
}

pub fn run(cfg: &ExperimentConfig, flags: &Flags) -> anyhow::Result<()> {
    let stage = &cfg.train;
    let data = table::load(&cfg.input(&stage.dataset)?)?;
    let (file, log) = match &stage.classifier {
        ClassifierSpec::Ht0 | ClassifierSpec::Ht5 => {
            let rule = if stage.classifier == ClassifierSpec::Ht0 {
                HardThreshold::Ht0
            } else {
                HardThreshold::Ht5
            };
            let column = rule.column().to_string();
            let sel = table::select(&data, std::slice::from_ref(&column))?;
            if sel.y.iter().all(|&v| v == sel.y[0]) {
                return Err(classify(ClassifierError::SingleClass));
            }
            (
                ModelFile::new(vec![column.clone()], None, Model::HardThreshold { rule }),
                TrainLog::HardThreshold { column },
            )
        }
        ClassifierSpec::Lr { config } => {
            let sel = table::select(&data, &stage.features)?;
            let scaler = fit_scaler(&sel.x).map_err(classify)?;
            let x = scaler.transform(&sel.x).map_err(classify)?;
            let m = fit_logistic_regression(&x, &sel.y, config).map_err(classify)?;
            let log = TrainLog::Logistic {
                converged: m.grad_inf_norm < config.tolerance,
                iterations: m.iterations,
                grad_inf_norm: m.grad_inf_norm,
                objective: m.objective(&x, &sel.y),
            };
            log::info!("logistic regression: {} Newton steps", m.iterations);
            (
                ModelFile::new(stage.features.clone(), Some(scaler), Model::Logistic(m)),
                log,
            )
        }
        ClassifierSpec::Sae { config } => {
            let config = SaeTrainConfig {
                seed: derive_seed(cfg.seed, 20),
                ..*config
            };
            let sel = table::select(&data, &stage.features)?;
            let scaler = fit_scaler(&sel.x).map_err(classify)?;
            let x = scaler.transform(&sel.x).map_err(classify)?;
            let gradcheck = if flags.gradcheck {
                Some(run_gradcheck(&x, &sel.y, &config)?)
            } else {
                None
            };
            let validation = match &stage.validation {
                Some(p) => {
                    let v = table::select(&table::load(&cfg.input(p)?)?, &stage.features)?;
                    Some((scaler.transform(&v.x).map_err(classify)?, v.y))
                }
                None => None,
            };
            let val = validation.as_ref().map(|(x, y)| (&x[..], &y[..]));
            let m = fit_sae(&x, &sel.y, val, &config).map_err(classify)?;
            let log = TrainLog::Sae {
                epochs: m.loss_history.clone(),
                gradcheck_max_rel_err: gradcheck,
            };
            (
                ModelFile::new(
                    stage.features.clone(),
                    Some(scaler),
                    Model::Sae(Box::new(m)),
                ),
                log,
            )
        }
    };
    write_json(&cfg.resolve(&stage.model), &file)?;
    write_json(&cfg.resolve(&stage.log), &log)
}
