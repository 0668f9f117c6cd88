//! Decodability features: BER estimates and VNR sequences from decoder
//! traces, Euclidean distances, and causal history means.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ldpc::DecoderTrace;

/// Window lengths used for history means.
pub const HISTORY_WINDOWS: [usize; 4] = [1, 2, 5, 9];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty LLR vector")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Per-record features. `history[w]` is `None` while fewer than `w` past
/// records exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub vnr: Vec<f64>,
    pub history: BTreeMap<usize, Option<Vec<f64>>>,
    pub eucd: Option<f64>,
}

/// Mean of `1 / (1 + |L|)` over the vector.
pub fn ber_estimate(llrs: &[f64]) -> Result<f64, FeatureError> {
    if llrs.is_empty() {
        return Err(FeatureError::Empty);
    }
    Ok(llrs.iter().map(|l| 1.0 / (1.0 + l.abs())).sum::<f64>() / llrs.len() as f64)
}

/// `VNR_j` for every traced iteration `j`.
pub fn vnr_sequence(trace: &DecoderTrace) -> Result<Vec<f64>, FeatureError> {
    if trace.app_llrs.is_empty() {
        return Err(FeatureError::Empty);
    }
    trace.app_llrs.iter().map(|v| ber_estimate(v)).collect()
}

pub fn euclidean_distance(rx: &[Complex64], reference: &[Complex64]) -> Result<f64, FeatureError> {
    if rx.len() != reference.len() {
        return Err(FeatureError::LengthMismatch(rx.len(), reference.len()));
    }
    Ok(rx
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Causal window means over strictly earlier records.
///
/// For record `t` and window `w` the result is the mean of
/// `base[t-w..t]`, or `None` when `t < w`. The outer vector follows `base`,
/// the inner follows `windows`.
pub fn history_features(base: &[Vec<f64>], windows: &[usize]) -> Vec<Vec<Option<Vec<f64>>>> {
    let dim = base.first().map_or(0, Vec::len);
    (0..base.len())
        .map(|t| {
            windows
                .iter()
                .map(|&w| {
                    if w == 0 || t < w {
                        return None;
                    }
                    let mut acc = vec![0.0; dim];
                    for row in &base[t - w..t] {
                        acc.iter_mut().zip(row).for_each(|(a, x)| *a += x);
                    }
                    acc.iter_mut().for_each(|a| *a /= w as f64);
                    Some(acc)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace_of(vectors: Vec<Vec<f64>>) -> DecoderTrace {
        let last = vectors.last().cloned().unwrap_or_default();
        DecoderTrace {
            app_llrs: vectors,
            final_llrs: last.clone(),
            messages: vec![],
            hard_decision: vec![0; last.len()],
            syndrome_ok: true,
            iterations_used: 0,
        }
    }

    #[test]
    fn ber_estimate_values() {
        assert_eq!(ber_estimate(&[0.0; 8]).unwrap(), 1.0);
        assert!(ber_estimate(&[1e300; 4]).unwrap() < 1e-299);
        let v = ber_estimate(&[1.0, 3.0, 9.0]).unwrap();
        assert!((v - (0.5 + 0.25 + 0.1) / 3.0).abs() < 1e-15);
        assert!((v - 0.283_333_333_333_333_3).abs() < 1e-15);
        assert_eq!(ber_estimate(&[]), Err(FeatureError::Empty));
    }

    #[test]
    fn vnr_sequence_uniform_and_zero_iterations() {
        let t = trace_of(vec![vec![9.0, -9.0, 9.0]; 6]);
        let v = vnr_sequence(&t).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|&x| (x - 0.1).abs() < 1e-15));

        let ch = vec![0.3, -1.2, 4.0];
        let t0 = trace_of(vec![ch.clone()]);
        assert_eq!(vnr_sequence(&t0).unwrap(), vec![ber_estimate(&ch).unwrap()]);
        assert_eq!(vnr_sequence(&trace_of(vec![])), Err(FeatureError::Empty));
    }

    #[test]
    fn euclidean_distance_cases() {
        let a = vec![Complex64::new(1.0, 2.0), Complex64::new(-1.0, 0.5)];
        assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
        let z = vec![Complex64::new(0.0, 0.0)];
        let p = vec![Complex64::new(3.0, 4.0)];
        assert_eq!(euclidean_distance(&p, &z).unwrap(), 5.0);
        assert!(euclidean_distance(&a, &z).is_err());
    }

    #[test]
    fn euclidean_distance_matches_two_pass_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..200);
            let a: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let b: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            // two passes: real parts, then imaginary parts
            let re: f64 = a.iter().zip(&b).map(|(x, y)| (x.re - y.re).powi(2)).sum();
            let im: f64 = a.iter().zip(&b).map(|(x, y)| (x.im - y.im).powi(2)).sum();
            let oracle = (re + im).sqrt();
            let got = euclidean_distance(&a, &b).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn history_examples() {
        let base: Vec<Vec<f64>> = (1..=10).map(|x| vec![x as f64]).collect();
        let h = history_features(&base, &[2]);
        // t = 4: mean of records 2 and 3 (values 3 and 4)
        assert_eq!(h[4][0], Some(vec![3.5]));
        assert_eq!(h[0][0], None);
        assert_eq!(h[1][0], None);
        assert_eq!(h[2][0], Some(vec![1.5]));

        let constant = vec![vec![0.25, 0.5]; 20];
        for row in history_features(&constant, &HISTORY_WINDOWS).iter().skip(9) {
            for w in row {
                assert_eq!(w.as_deref(), Some(&[0.25, 0.5][..]));
            }
        }
    }

    fn brute_force(base: &[Vec<f64>], t: usize, w: usize) -> Option<Vec<f64>> {
        if t < w {
            return None;
        }
        let dim = base[0].len();
        let mut out = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut s = 0.0;
            let mut i = t;
            while i > t - w {
                i -= 1;
                s += base[i][j];
            }
            out.push(s / w as f64);
        }
        Some(out)
    }

    proptest! {
        #[test]
        fn window_means_match_brute_force(
            base in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..40)
        ) {
            let h = history_features(&base, &HISTORY_WINDOWS);
            for t in 0..base.len() {
                for (i, &w) in HISTORY_WINDOWS.iter().enumerate() {
                    match (&h[t][i], brute_force(&base, t, w)) {
                        (None, None) => {}
                        (Some(a), Some(b)) => {
                            for (x, y) in a.iter().zip(&b) {
                                prop_assert!((x - y).abs() < 1e-12);
                            }
                        }
                        _ => prop_assert!(false, "missing marker mismatch"),
                    }
                }
            }
        }

        #[test]
        fn history_is_causal(
            base in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 2..30),
            cut in 0usize..30,
            noise in 0.0f64..1.0,
        ) {
            let t = cut % base.len();
            let mut modified = base.clone();
            for row in modified.iter_mut().skip(t) {
                row.iter_mut().for_each(|x| *x = noise);
            }
            let a = history_features(&base, &HISTORY_WINDOWS);
            let b = history_features(&modified, &HISTORY_WINDOWS);
            prop_assert_eq!(&a[..=t], &b[..=t]);
        }

        #[test]
        fn vnr_in_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let b = ber_estimate(&v).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
        }
    }
}
