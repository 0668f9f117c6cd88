//! Small statistical helpers shared by the Monte Carlo routines.

use serde::{Deserialize, Serialize};

/// Two-sided normal quantile used for "3 sigma" intervals.
pub const Z_3SIGMA: f64 = 3.0;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// A binomial proportion estimate with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn wilson(successes: u64, trials: u64, z: f64) -> Self {
        let (lo, hi) = wilson_interval(successes, trials, z);
        let estimate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Proportion {
            successes,
            trials,
            estimate,
            lo,
            hi,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Wilson score interval for `k` successes out of `n` trials.
///
/// Returns `(0, 1)` for `n == 0`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Sample mean with a normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMean) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn estimate(&self, z: f64) -> MeanEstimate {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        let std_err = if self.n > 0 {
            (var / self.n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        MeanEstimate {
            mean: self.mean,
            std_err,
            lo: self.mean - z * std_err,
            hi: self.mean + z * std_err,
        }
    }
}

/// Binomial probability mass function `P(X = k)` for `X ~ Bin(n, p)`.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    use statrs::distribution::{Binomial, Discrete};
    if p <= 0.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[n as usize] = 1.0;
        return v;
    }
    let dist = Binomial::new(p, n).expect("valid binomial parameters");
    (0..=n).map(|k| dist.pmf(k)).collect()
}

/// Discrete convolution of two probability vectors.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate_and_handles_zero() {
        let (lo, hi) = wilson_interval(0, 1000, Z_3SIGMA);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
        let p = Proportion::wilson(50, 100, Z_95);
        assert!(p.contains(0.5));
        assert!(p.lo > 0.39 && p.hi < 0.61);
    }

    #[test]
    fn running_mean_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = RunningMean::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = RunningMean::default();
        let mut b = RunningMean::default();
        xs[..40].iter().for_each(|&x| a.push(x));
        xs[40..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        let (ea, eb) = (all.estimate(1.0), a.estimate(1.0));
        assert!((ea.mean - eb.mean).abs() < 1e-14);
        assert!((ea.std_err - eb.std_err).abs() < 1e-14);
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        let v = binomial_pmf(20, 0.3);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v[0] - 0.7f64.powi(20)).abs() < 1e-15);
    }
}
