//! Supervised autoencoder: a dense autoencoder whose 3-wide bottleneck also
//! feeds a small softmax classifier, trained jointly.
//!
//! Encoder `d -> 25 -> 10 -> 3`, decoder `3 -> 10 -> 25 -> d`, head
//! `3 -> 10 -> 5 -> 2`. Hidden blocks are linear, batch norm, ReLU and
//! dropout; the decoder output and the head logits are plain linear maps.

mod gradcheck;
mod layer;
mod train;

pub use gradcheck::{gradient_check, GradCheck};
pub use layer::{BatchNorm, Layer};
pub use train::{fit_sae, EpochLoss};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::rng::{substream, Domain};
use layer::{Cache, LayerGrad, Norm};

pub(crate) const ENCODER_WIDTHS: [usize; 3] = [25, 10, 3];
pub(crate) const HEAD_WIDTHS: [usize; 3] = [10, 5, 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaeTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Each positive appears this many times per epoch.
    pub oversample: usize,
    pub lambda_rec: f64,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        SaeTrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 256,
            oversample: 100,
            lambda_rec: 1.0,
            dropout: 0.2,
            patience: 5,
            seed: 0,
        }
    }
}

impl SaeTrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size >= 2
            && self.oversample >= 1
            && self.lambda_rec >= 0.0
            && (0.0..1.0).contains(&self.dropout);
        if ok {
            Ok(())
        } else {
            Err(ClassifierError::Config(format!(
                "invalid SAE settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeModel {
    pub input_dim: usize,
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub head: Vec<Layer>,
    pub dropout: f64,
    pub config: SaeTrainConfig,
    pub loss_history: Vec<EpochLoss>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout.
    Train,
    /// Running statistics, no dropout.
    Infer,
}

/// Relative weights of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub ce: f64,
}

/// Mean squared reconstruction error and mean cross-entropy of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub rec: f64,
    pub ce: f64,
}

impl LossParts {
    pub fn total(&self, w: LossWeights) -> f64 {
        w.rec * self.rec + w.ce * self.ce
    }
}

pub(crate) struct Pass {
    pub x_rec: Vec<f64>,
    pub probs: Vec<f64>,
    pub enc: Vec<Cache>,
    pub dec: Vec<Cache>,
    pub head: Vec<Cache>,
}

fn stack(widths: &[usize], n_in: usize, last_plain: bool, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let mut prev = n_in;
    widths
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let hidden = !(last_plain && i + 1 == widths.len());
            let l = Layer::new(prev, w, hidden, hidden, hidden, rng);
            prev = w;
            l
        })
        .collect()
}

fn run(
    layers: &[Layer],
    mut x: Vec<f64>,
    batch: usize,
    norm: Norm,
    mut drop: Option<(f64, &mut ChaCha8Rng)>,
) -> (Vec<f64>, Vec<Cache>) {
    let mut caches = Vec::with_capacity(layers.len());
    for l in layers {
        let d = drop.as_mut().map(|(r, rng)| (*r, &mut **rng));
        let (y, c) = l.forward(&x, batch, norm, d);
        caches.push(c);
        x = y;
    }
    (x, caches)
}

fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut p = logits.to_vec();
    for row in p.chunks_mut(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        row.iter_mut().for_each(|v| {
            *v = (*v - m).exp();
            s += *v;
        });
        row.iter_mut().for_each(|v| *v /= s);
    }
    p
}

impl SaeModel {
    /// Fresh weights drawn from the `Init` substream of `cfg.seed`.
    pub fn new(input_dim: usize, cfg: SaeTrainConfig) -> Self {
        let mut rng = substream(cfg.seed, Domain::Init, 0);
        let encoder = stack(&ENCODER_WIDTHS, input_dim, false, &mut rng);
        let decoder = stack(&[10, 25, input_dim], 3, true, &mut rng);
        let head = stack(&HEAD_WIDTHS, 3, true, &mut rng);
        SaeModel {
            input_dim,
            encoder,
            decoder,
            head,
            dropout: cfg.dropout,
            config: cfg,
            loss_history: Vec::new(),
        }
    }

    /// Sets the logit layer to zero so every input scores (0.5, 0.5).
    pub fn zero_head_output(&mut self) {
        let last = self.head.last_mut().expect("head has layers");
        last.weight.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|w| *w = 0.0);
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(Layer::n_params).sum()
    }

    pub(crate) fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(&self.decoder).chain(&self.head)
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(self.head.iter_mut())
    }

    pub(crate) fn pass(
        &self,
        x: &[f64],
        batch: usize,
        norm: Norm,
        mut drop: Option<&mut ChaCha8Rng>,
    ) -> Pass {
        let rate = self.dropout;
        let (bot, enc) = run(
            &self.encoder,
            x.to_vec(),
            batch,
            norm,
            drop.as_mut().map(|r| (rate, &mut **r)),
        );
        let (x_rec, dec) = run(
            &self.decoder,
            bot.clone(),
            batch,
            norm,
            drop.as_mut().map(|r| (rate, &mut **r)),
        );
        let (logits, head) = run(&self.head, bot, batch, norm, drop.map(|r| (rate, r)));
        Pass {
            x_rec,
            probs: softmax_rows(&logits, 2),
            enc,
            dec,
            head,
        }
    }

    pub(crate) fn losses(&self, pass: &Pass, x: &[f64], y: &[u8]) -> LossParts {
        let b = y.len() as f64;
        let rec = pass
            .x_rec
            .iter()
            .zip(x)
            .map(|(r, v)| (r - v) * (r - v))
            .sum::<f64>()
            / (b * self.input_dim as f64);
        let ce = y
            .iter()
            .enumerate()
            .map(|(s, &t)| -pass.probs[2 * s + t as usize].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b;
        LossParts { rec, ce }
    }

    /// Backpropagates the weighted loss; gradients follow the layer order
    /// encoder, decoder, head.
    pub(crate) fn backward(
        &self,
        pass: &Pass,
        x: &[f64],
        y: &[u8],
        w: LossWeights,
    ) -> Vec<LayerGrad> {
        let b = y.len();
        let d = self.input_dim;
        let scale = 2.0 * w.rec / (b * d) as f64;
        let drec: Vec<f64> = pass
            .x_rec
            .iter()
            .zip(x)
            .map(|(r, v)| scale * (r - v))
            .collect();
        let mut dlog = pass.probs.clone();
        for (s, &t) in y.iter().enumerate() {
            dlog[2 * s + t as usize] -= 1.0;
        }
        dlog.iter_mut().for_each(|g| *g *= w.ce / b as f64);

        let back = |layers: &[Layer], caches: &[Cache], mut g: Vec<f64>| {
            let mut grads = Vec::with_capacity(layers.len());
            for (l, c) in layers.iter().zip(caches).rev() {
                let (dx, lg) = l.backward(c, &g);
                grads.push(lg);
                g = dx;
            }
            grads.reverse();
            (g, grads)
        };
        let (dbot_dec, gdec) = back(&self.decoder, &pass.dec, drec);
        let (dbot_head, ghead) = back(&self.head, &pass.head, dlog);
        let dbot: Vec<f64> = dbot_dec
            .iter()
            .zip(&dbot_head)
            .map(|(a, b)| a + b)
            .collect();
        let (_, genc) = back(&self.encoder, &pass.enc, dbot);
        genc.into_iter().chain(gdec).chain(ghead).collect()
    }

    /// Block-error probability per row, inference mode.
    pub fn score_batch(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ClassifierError> {
        if let Some(r) = x.iter().find(|r| r.len() != self.input_dim) {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim,
                got: r.len(),
            });
        }
        Ok(x.par_chunks(1024)
            .flat_map_iter(|chunk| {
                let flat: Vec<f64> = chunk.iter().flatten().copied().collect();
                let p = self.pass(&flat, chunk.len(), Norm::Running, None);
                p.probs.chunks(2).map(|c| c[1]).collect::<Vec<_>>()
            })
            .collect())
    }
}

/// Reconstruction and class probabilities `(p0, p1)` for one input.
///
/// `Mode::Train` normalises with the statistics of this single row and
/// applies dropout from `rng`; use [`Mode::Infer`] for scoring.
pub fn sae_forward(
    model: &SaeModel,
    x: &[f64],
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Vec<f64>, [f64; 2]), ClassifierError> {
    if x.len() != model.input_dim {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.input_dim,
            got: x.len(),
        });
    }
    let p = match mode {
        Mode::Infer => model.pass(x, 1, Norm::Running, None),
        Mode::Train => model.pass(x, 1, Norm::Batch, rng),
    };
    Ok((p.x_rec, [p.probs[0], p.probs[1]]))
}

/// Loss and flattened parameter gradients on one batch, with batch-norm
/// batch statistics and no dropout.
pub fn loss_gradients(
    model: &SaeModel,
    x: &[Vec<f64>],
    y: &[u8],
    w: LossWeights,
) -> Result<(LossParts, Vec<f64>), ClassifierError> {
    if let Some(r) = x.iter().find(|r| r.len() != model.input_dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.input_dim,
            got: r.len(),
        });
    }
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let pass = model.pass(&flat, y.len(), Norm::Batch, None);
    let parts = model.losses(&pass, &flat, y);
    let grads = model.backward(&pass, &flat, y, w);
    Ok((parts, grads.iter().flat_map(LayerGrad::flat).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn architecture_matches_layout() {
        let m = SaeModel::new(6, SaeTrainConfig::default());
        let shape = |ls: &[Layer]| ls.iter().map(|l| (l.n_in, l.n_out)).collect::<Vec<_>>();
        assert_eq!(shape(&m.encoder), vec![(6, 25), (25, 10), (10, 3)]);
        assert_eq!(shape(&m.decoder), vec![(3, 10), (10, 25), (25, 6)]);
        assert_eq!(shape(&m.head), vec![(3, 10), (10, 5), (5, 2)]);
        assert!(m.decoder[2].batch_norm.is_none() && !m.decoder[2].relu);
        assert!(m.head[2].batch_norm.is_none() && !m.head[2].dropout);
        assert!(m
            .encoder
            .iter()
            .all(|l| l.batch_norm.is_some() && l.relu && l.dropout));
    }

    #[test]
    fn probabilities_sum_to_one_and_inference_is_deterministic() {
        let m = SaeModel::new(6, SaeTrainConfig::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (rec, p) = sae_forward(&m, &x, Mode::Infer, None).unwrap();
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            assert_eq!(rec.len(), 6);
            assert_eq!(sae_forward(&m, &x, Mode::Infer, None).unwrap(), (rec, p));
        }
        assert!(sae_forward(&m, &[0.0; 5], Mode::Infer, None).is_err());
    }

    #[test]
    fn zero_logit_layer_gives_even_odds() {
        let mut m = SaeModel::new(4, SaeTrainConfig::default());
        m.zero_head_output();
        let (_, p) = sae_forward(&m, &[0.3, -1.0, 2.0, 0.1], Mode::Infer, None).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn classification_only_loss_leaves_decoder_gradients_zero() {
        let m = SaeModel::new(5, SaeTrainConfig::default());
        let x: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..5).map(|k| ((i * 5 + k) as f64).sin()).collect())
            .collect();
        let y: Vec<u8> = (0..8).map(|i| (i % 3 == 0) as u8).collect();
        let (_, g) = loss_gradients(&m, &x, &y, LossWeights { rec: 0.0, ce: 1.0 }).unwrap();
        let enc: usize = m.encoder.iter().map(Layer::n_params).sum();
        let dec: usize = m.decoder.iter().map(Layer::n_params).sum();
        assert!(g[enc..enc + dec].iter().all(|&v| v == 0.0));
        assert!(g[..enc].iter().any(|&v| v != 0.0));

        let (l1, g1) = loss_gradients(&m, &x, &y, LossWeights { rec: 1.0, ce: 1.0 }).unwrap();
        let (l2, g2) = loss_gradients(&m, &x, &y, LossWeights { rec: 2.0, ce: 2.0 }).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
