use serde::{Deserialize, Serialize};

use super::layer::Norm;
use super::{loss_gradients, LossWeights, SaeModel};
use crate::classifiers::ClassifierError;

/// Scale below which gradient magnitudes are compared absolutely. Central
/// differences of an O(1) loss carry roundoff near 1e-11, far below this.
pub const GRADCHECK_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Flat index of the worst parameter.
    pub worst: usize,
    pub n_params: usize,
}

fn loss_at(model: &SaeModel, flat: &[f64], y: &[u8], w: LossWeights) -> f64 {
    let pass = model.pass(flat, y.len(), Norm::Batch, None);
    model.losses(&pass, flat, y).total(w)
}

/// Compares backpropagated gradients with central differences of step `eps`.
///
/// Batch norm uses batch statistics and dropout is off, so the loss is a
/// deterministic function of the parameters. The relative error of a
/// parameter is `|a - n| / max(|a| + |n|, GRADCHECK_FLOOR)`.
pub fn gradient_check(
    model: &SaeModel,
    x: &[Vec<f64>],
    y: &[u8],
    w: LossWeights,
    eps: f64,
) -> Result<GradCheck, ClassifierError> {
    if y.is_empty() || x.len() != y.len() {
        return Err(ClassifierError::Config(
            "gradient check needs a nonempty batch".into(),
        ));
    }
    let (_, analytic) = loss_gradients(model, x, y, w)?;
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(ClassifierError::NonFiniteGradient(i));
    }
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: 0,
        n_params: analytic.len(),
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = nth_param(&mut probe, i);
        set_param(&mut probe, i, orig + eps);
        let up = loss_at(&probe, &flat, y, w);
        set_param(&mut probe, i, orig - eps);
        let down = loss_at(&probe, &flat, y, w);
        set_param(&mut probe, i, orig);
        let n = (up - down) / (2.0 * eps);
        if !n.is_finite() {
            return Err(ClassifierError::NonFiniteGradient(i));
        }
        let abs = (a - n).abs();
        let rel = abs / (a.abs() + n.abs()).max(GRADCHECK_FLOOR);
        out.max_abs_err = out.max_abs_err.max(abs);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst = i;
        }
    }
    Ok(out)
}

fn nth_param(m: &mut SaeModel, i: usize) -> f64 {
    *m.layers_mut()
        .flat_map(|l| l.params_mut())
        .nth(i)
        .expect("index in range")
}

fn set_param(m: &mut SaeModel, i: usize, v: f64) {
    *m.layers_mut()
        .flat_map(|l| l.params_mut())
        .nth(i)
        .expect("index in range") = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::SaeTrainConfig;
    use rand::{Rng, SeedableRng};

    #[test]
    fn backprop_matches_finite_differences() {
        for seed in 0..3 {
            let cfg = SaeTrainConfig {
                seed,
                ..Default::default()
            };
            let m = SaeModel::new(6, cfg);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let x: Vec<Vec<f64>> = (0..16)
                .map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let y: Vec<u8> = (0..16).map(|i| (i % 4 == 0) as u8).collect();
            let r = gradient_check(&m, &x, &y, LossWeights { rec: 1.0, ce: 1.0 }, 1e-5).unwrap();
            assert_eq!(r.n_params, m.n_params());
            assert!(r.max_rel_err < 1e-4, "seed {seed}: {r:?}");
        }
    }
}
