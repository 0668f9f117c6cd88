use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layer::Norm;
use super::{LossParts, LossWeights, SaeModel, SaeTrainConfig};
use crate::classifiers::{check_rows, ClassifierError};
use crate::rng::{substream, Domain};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Batch averages over the epoch, in training mode.
    pub train: LossParts,
    /// Inference-mode cross-entropy on the validation rows, if any.
    pub val_ce: Option<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, model: &mut SaeModel, grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let params = model.layers_mut().flat_map(|l| l.params_mut());
        for (((p, g), m), v) in params.zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

impl SaeModel {
    /// Inference-mode losses over a whole data set.
    pub fn evaluate(&self, x: &[Vec<f64>], y: &[u8]) -> LossParts {
        let mut acc = LossParts::default();
        for (xs, ys) in x.chunks(4096).zip(y.chunks(4096)) {
            let flat: Vec<f64> = xs.iter().flatten().copied().collect();
            let pass = self.pass(&flat, ys.len(), Norm::Running, None);
            let l = self.losses(&pass, &flat, ys);
            acc.rec += l.rec * ys.len() as f64;
            acc.ce += l.ce * ys.len() as f64;
        }
        acc.rec /= y.len() as f64;
        acc.ce /= y.len() as f64;
        acc
    }
}

/// Trains a fresh model with Adam on scaled features.
///
/// Positives are duplicated `cfg.oversample` times before each epoch's
/// shuffle. With a validation set, training stops after `cfg.patience`
/// epochs without a better validation cross-entropy and the best
/// parameters are returned.
pub fn fit_sae(
    x: &[Vec<f64>],
    y: &[u8],
    validation: Option<(&[Vec<f64>], &[u8])>,
    cfg: &SaeTrainConfig,
) -> Result<SaeModel, ClassifierError> {
    let d = check_rows(x, y)?;
    cfg.validate()?;
    let y: Vec<u8> = y.iter().map(|&v| u8::from(v != 0)).collect();
    let mut model = SaeModel::new(d, *cfg);
    let n_params = model.n_params();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let weights = LossWeights {
        rec: cfg.lambda_rec,
        ce: 1.0,
    };
    let mut pool: Vec<usize> = (0..x.len()).collect();
    for (i, _) in y.iter().enumerate().filter(|(_, &t)| t == 1) {
        pool.extend(std::iter::repeat(i).take(cfg.oversample - 1));
    }

    let mut best: Option<(f64, SaeModel)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = substream(cfg.seed, Domain::Training, epoch as u64);
        pool.shuffle(&mut rng);
        let mut sum = LossParts::default();
        let mut batches = 0usize;
        for chunk in pool.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let flat: Vec<f64> = chunk.iter().flat_map(|&i| x[i].iter().copied()).collect();
            let yb: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
            let pass = model.pass(&flat, yb.len(), Norm::Batch, Some(&mut rng));
            let l = model.losses(&pass, &flat, &yb);
            if !(l.rec.is_finite() && l.ce.is_finite()) {
                return Err(ClassifierError::Diverged {
                    epoch,
                    rec: l.rec,
                    ce: l.ce,
                });
            }
            let grads = model.backward(&pass, &flat, &yb, weights);
            let flat_grad: Vec<f64> = grads.iter().flat_map(|g| g.flat()).collect();
            adam.step(&mut model, &flat_grad, cfg.learning_rate);
            for (layer, cache) in model
                .layers_mut()
                .zip(pass.enc.iter().chain(&pass.dec).chain(&pass.head))
            {
                layer.update_running(cache);
            }
            sum.rec += l.rec;
            sum.ce += l.ce;
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        let train = LossParts {
            rec: sum.rec / nb,
            ce: sum.ce / nb,
        };
        let val_ce = validation.map(|(vx, vy)| model.evaluate(vx, vy).ce);
        log::debug!(
            "epoch {epoch}: rec {:.5} ce {:.5} val {val_ce:?}",
            train.rec,
            train.ce
        );
        model.loss_history.push(EpochLoss {
            epoch,
            train,
            val_ce,
        });
        if let Some(v) = val_ce {
            if !v.is_finite() {
                return Err(ClassifierError::Diverged {
                    epoch,
                    rec: train.rec,
                    ce: v,
                });
            }
            match &best {
                Some((b, _)) if v >= *b => {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((v, model.clone()));
                    stale = 0;
                }
            }
        }
    }
    Ok(match best {
        Some((_, mut m)) => {
            m.loss_history = model.loss_history;
            m
        }
        None => model,
    })
}
