//! L2-regularised logistic regression with balanced class weights, fitted by
//! damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_rows, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    /// Penalty `lambda / 2 * |w|^2` added to the mean weighted loss.
    pub l2_strength: f64,
    /// Stop once the gradient's largest component is below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            l2_strength: 1e-3,
            tolerance: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_strength: f64,
    /// Weights of class 0 and class 1, `n / (2 n_c)`.
    pub class_weights: [f64; 2],
    pub iterations: usize,
    pub grad_inf_norm: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logit(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b
}

fn objective(w: &[f64], b: f64, lambda: f64, cw: [f64; 2], x: &[Vec<f64>], y: &[u8]) -> f64 {
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &t)| {
            let z = logit(w, b, r);
            cw[t as usize] * (softplus(z) - t as f64 * z)
        })
        .sum();
    data / x.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

impl LrModel {
    pub fn score_row(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.weights.len() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(sigmoid(logit(&self.weights, self.bias, x)))
    }

    pub fn score_batch(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ClassifierError> {
        x.par_iter().map(|r| self.score_row(r)).collect()
    }

    /// The regularised training loss at the current parameters.
    pub fn objective(&self, x: &[Vec<f64>], y: &[u8]) -> f64 {
        objective(
            &self.weights,
            self.bias,
            self.l2_strength,
            self.class_weights,
            x,
            y,
        )
    }
}

pub fn fit_logistic_regression(
    x: &[Vec<f64>],
    y: &[u8],
    cfg: &LrConfig,
) -> Result<LrModel, ClassifierError> {
    let d = check_rows(x, y)?;
    if !(cfg.l2_strength >= 0.0) || !(cfg.tolerance > 0.0) {
        return Err(ClassifierError::Config(
            "l2_strength must be >= 0 and tolerance > 0".into(),
        ));
    }
    let n = x.len() as f64;
    let n1 = y.iter().filter(|&&v| v != 0).count() as f64;
    let cw = [n / (2.0 * (n - n1)), n / (2.0 * n1)];
    let y: Vec<u8> = y.iter().map(|&v| u8::from(v != 0)).collect();
    let lambda = cfg.l2_strength;
    let mut theta = DVector::<f64>::zeros(d + 1);
    let split = |t: &DVector<f64>| (t.as_slice()[..d].to_vec(), t[d]);

    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (w, b) = split(&theta);
        let mut g = DVector::<f64>::zeros(d + 1);
        let mut h = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (r, &t) in x.iter().zip(&y) {
            let p = sigmoid(logit(&w, b, r));
            let c = cw[t as usize];
            let xr = DVector::from_iterator(d + 1, r.iter().copied().chain([1.0]));
            g.axpy(c * (p - t as f64) / n, &xr, 1.0);
            h.ger(c * p * (1.0 - p) / n, &xr, &xr, 1.0);
        }
        for j in 0..d {
            g[j] += lambda * theta[j];
            h[(j, j)] += lambda;
        }
        grad_norm = g.amax();
        if grad_norm <= cfg.tolerance || iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        let mut damping = 0.0;
        let step = loop {
            let mut hd = h.clone();
            for j in 0..=d {
                hd[(j, j)] += damping;
            }
            if let Some(ch) = hd.cholesky() {
                break ch.solve(&g);
            }
            damping = if damping == 0.0 {
                1e-10
            } else {
                damping * 10.0
            };
        };
        let f0 = objective(&w, b, lambda, cw, x, &y);
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            let (cw_, cb) = split(&cand);
            let f = objective(&cw_, cb, lambda, cw, x, &y);
            if f <= f0 - 1e-4 * t * slope || t < 1e-12 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    if grad_norm > cfg.tolerance {
        log::warn!(
            "logistic regression stopped after {iterations} iterations with gradient {grad_norm:.3e}"
        );
    }
    let (weights, bias) = split(&theta);
    Ok(LrModel {
        weights,
        bias,
        l2_strength: lambda,
        class_weights: cw,
        iterations,
        grad_inf_norm: grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 7 == 0) as u8;
            let shift = if label == 1 { 0.8 } else { 0.0 };
            x.push(
                (0..3)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) + shift)
                    .collect(),
            );
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn score_arithmetic() {
        let m = LrModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            l2_strength: 0.0,
            class_weights: [1.0, 1.0],
            iterations: 0,
            grad_inf_norm: 0.0,
        };
        assert_eq!(m.score_row(&[3.0, -1.0]).unwrap(), 0.5);
        let m = LrModel {
            weights: vec![1.0, 0.0],
            bias: 9f64.ln() - 2.0,
            ..m
        };
        assert!((m.score_row(&[2.0, 5.0]).unwrap() - 0.9).abs() < 1e-15);
        assert!(m.score_row(&[1.0]).is_err());
    }

    #[test]
    fn two_point_separable_set() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![0, 1];
        let cfg = LrConfig {
            l2_strength: 1.0,
            ..Default::default()
        };
        let m = fit_logistic_regression(&x, &y, &cfg).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0] > 0.0);
        assert!(m.score_row(&x[0]).unwrap() < 0.5);
        assert!(m.score_row(&x[1]).unwrap() > 0.5);
        // stationarity of log(1+e^-w) + w^2/2: w = sigmoid(-w)
        assert!((m.weights[0] - sigmoid(-m.weights[0])).abs() < 1e-8);
    }

    #[test]
    fn converges_and_is_a_local_minimum() {
        let (x, y) = cloud(2000, 1);
        let m = fit_logistic_regression(&x, &y, &LrConfig::default()).unwrap();
        assert!(m.grad_inf_norm <= 1e-8);
        let f0 = m.objective(&x, &y);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let dir: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            for sign in [-1.0, 1.0] {
                let mut p = m.clone();
                let delta = 1e-3 * sign;
                p.weights
                    .iter_mut()
                    .zip(&dir)
                    .for_each(|(w, d)| *w += delta * d);
                p.bias += delta * dir[3];
                assert!(p.objective(&x, &y) >= f0);
            }
        }
    }

    #[test]
    fn label_flip_mirrors_scores_on_balanced_symmetric_data() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 - 19.5) / 7.0]).collect();
        let y: Vec<u8> = (0..40).map(|i| ((i * 13) % 40 >= 17) as u8).collect();
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let cfg = LrConfig::default();
        let a = fit_logistic_regression(&x, &y, &cfg).unwrap();
        let b = fit_logistic_regression(&x, &flipped, &cfg).unwrap();
        for r in &x {
            let s = a.score_row(r).unwrap();
            assert!((s - (1.0 - b.score_row(r).unwrap())).abs() < 1e-8);
        }
    }

    #[test]
    fn heavy_penalty_shrinks_to_balanced_prior() {
        let (x, y) = cloud(500, 3);
        let cfg = LrConfig {
            l2_strength: 1e9,
            ..Default::default()
        };
        let m = fit_logistic_regression(&x, &y, &cfg).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((m.score_row(&x[0]).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn batch_matches_rows_and_single_class_is_rejected() {
        let (x, y) = cloud(300, 4);
        let m = fit_logistic_regression(&x, &y, &LrConfig::default()).unwrap();
        let batch = m.score_batch(&x).unwrap();
        for (r, s) in x.iter().zip(batch) {
            assert_eq!(m.score_row(r).unwrap(), s);
        }
        assert_eq!(
            fit_logistic_regression(&x, &vec![0; x.len()], &LrConfig::default()),
            Err(ClassifierError::SingleClass)
        );
    }
}
