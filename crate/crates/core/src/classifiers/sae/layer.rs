//! Dense layer with optional batch normalisation, ReLU and dropout.
//!
//! Batches are row-major `batch x width` slices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out x n_in`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub batch_norm: Option<BatchNorm>,
    pub relu: bool,
    pub dropout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerGrad {
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight
            .iter()
            .chain(&self.bias)
            .chain(&self.gamma)
            .chain(&self.beta)
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Norm {
    Batch,
    Running,
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    batch: usize,
    input: Vec<f64>,
    norm: Norm,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pre_act: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Layer {
    /// Uniform `+-1/sqrt(n_in)` weights and biases.
    pub fn new(
        n_in: usize,
        n_out: usize,
        batch_norm: bool,
        relu: bool,
        dropout: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut draw =
            |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = draw(n_in * n_out);
        let bias = draw(n_out);
        Layer {
            n_in,
            n_out,
            weight,
            bias,
            batch_norm: batch_norm.then(|| BatchNorm {
                gamma: vec![1.0; n_out],
                beta: vec![0.0; n_out],
                running_mean: vec![0.0; n_out],
                running_var: vec![1.0; n_out],
            }),
            relu,
            dropout,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len()
            + self.bias.len()
            + self.batch_norm.as_ref().map_or(0, |b| 2 * b.gamma.len())
    }

    /// Trainable parameters in the same order as [`LayerGrad::flat`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        let (g, b): (&mut [f64], &mut [f64]) = match &mut self.batch_norm {
            Some(bn) => (&mut bn.gamma, &mut bn.beta),
            None => (&mut [], &mut []),
        };
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .chain(g.iter_mut())
            .chain(b.iter_mut())
    }

    pub(crate) fn forward(
        &self,
        x: &[f64],
        batch: usize,
        norm: Norm,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> (Vec<f64>, Cache) {
        let (ni, no) = (self.n_in, self.n_out);
        debug_assert_eq!(x.len(), batch * ni);
        let mut z = vec![0.0; batch * no];
        for s in 0..batch {
            let xs = &x[s * ni..(s + 1) * ni];
            for o in 0..no {
                let w = &self.weight[o * ni..(o + 1) * ni];
                z[s * no + o] = self.bias[o] + w.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let mut cache = Cache {
            batch,
            input: x.to_vec(),
            norm,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            batch_mean: Vec::new(),
            batch_var: Vec::new(),
            pre_act: Vec::new(),
            mask: None,
        };
        if let Some(bn) = &self.batch_norm {
            let (mean, var) = match norm {
                Norm::Batch => {
                    let mut m = vec![0.0; no];
                    let mut v = vec![0.0; no];
                    for s in 0..batch {
                        for o in 0..no {
                            m[o] += z[s * no + o];
                        }
                    }
                    m.iter_mut().for_each(|a| *a /= batch as f64);
                    for s in 0..batch {
                        for o in 0..no {
                            let d = z[s * no + o] - m[o];
                            v[o] += d * d;
                        }
                    }
                    v.iter_mut().for_each(|a| *a /= batch as f64);
                    (m, v)
                }
                Norm::Running => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = vec![0.0; batch * no];
            for s in 0..batch {
                for o in 0..no {
                    let i = s * no + o;
                    xhat[i] = (z[i] - mean[o]) * inv_std[o];
                    z[i] = bn.gamma[o] * xhat[i] + bn.beta[o];
                }
            }
            cache.xhat = xhat;
            cache.inv_std = inv_std;
            cache.batch_mean = mean;
            cache.batch_var = var;
        }
        if self.relu {
            cache.pre_act = z.clone();
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if self.dropout {
            if let Some((rate, rng)) = dropout {
                let keep = 1.0 - rate;
                let mask: Vec<f64> = (0..z.len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                z.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                cache.mask = Some(mask);
            }
        }
        (z, cache)
    }

    /// Returns the gradient with respect to the input and the parameters.
    pub(crate) fn backward(&self, cache: &Cache, dout: &[f64]) -> (Vec<f64>, LayerGrad) {
        let (ni, no, batch) = (self.n_in, self.n_out, cache.batch);
        let mut dz = dout.to_vec();
        if let Some(mask) = &cache.mask {
            dz.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        if self.relu {
            dz.iter_mut().zip(&cache.pre_act).for_each(|(g, &u)| {
                if u <= 0.0 {
                    *g = 0.0
                }
            });
        }
        let mut grad = LayerGrad {
            weight: vec![0.0; ni * no],
            bias: vec![0.0; no],
            gamma: Vec::new(),
            beta: Vec::new(),
        };
        if let Some(bn) = &self.batch_norm {
            let mut dgamma = vec![0.0; no];
            let mut dbeta = vec![0.0; no];
            let mut sum_dxhat = vec![0.0; no];
            let mut sum_dxhat_xhat = vec![0.0; no];
            for s in 0..batch {
                for o in 0..no {
                    let i = s * no + o;
                    dgamma[o] += dz[i] * cache.xhat[i];
                    dbeta[o] += dz[i];
                    let dxh = dz[i] * bn.gamma[o];
                    sum_dxhat[o] += dxh;
                    sum_dxhat_xhat[o] += dxh * cache.xhat[i];
                }
            }
            let b = batch as f64;
            for s in 0..batch {
                for o in 0..no {
                    let i = s * no + o;
                    let dxh = dz[i] * bn.gamma[o];
                    dz[i] = match cache.norm {
                        Norm::Batch => {
                            cache.inv_std[o] / b
                                * (b * dxh - sum_dxhat[o] - cache.xhat[i] * sum_dxhat_xhat[o])
                        }
                        Norm::Running => dxh * cache.inv_std[o],
                    };
                }
            }
            grad.gamma = dgamma;
            grad.beta = dbeta;
        }
        let mut dx = vec![0.0; batch * ni];
        for s in 0..batch {
            let xs = &cache.input[s * ni..(s + 1) * ni];
            let dxs = &mut dx[s * ni..(s + 1) * ni];
            for o in 0..no {
                let g = dz[s * no + o];
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                let w = &self.weight[o * ni..(o + 1) * ni];
                let gw = &mut grad.weight[o * ni..(o + 1) * ni];
                for k in 0..ni {
                    gw[k] += g * xs[k];
                    dxs[k] += g * w[k];
                }
            }
        }
        (dx, grad)
    }

    pub(crate) fn update_running(&mut self, cache: &Cache) {
        if let Some(bn) = &mut self.batch_norm {
            let b = cache.batch as f64;
            let unbias = if cache.batch > 1 { b / (b - 1.0) } else { 1.0 };
            for o in 0..self.n_out {
                bn.running_mean[o] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[o] + BN_MOMENTUM * cache.batch_mean[o];
                bn.running_var[o] = (1.0 - BN_MOMENTUM) * bn.running_var[o]
                    + BN_MOMENTUM * cache.batch_var[o] * unbias;
            }
        }
    }
}
