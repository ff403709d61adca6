//! Ensemble statistics shared by the diagnostics.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanStderr { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let m = mean(xs);
        let stderr = if n > 1 { (sample_variance(xs) / n as f64).sqrt() } else { f64::INFINITY };
        MeanStderr { mean: m, stderr, n }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// One-sided tail mass of a 3-sigma normal deviation, `P(Z > 3)`.
pub fn three_sigma_tail() -> f64 {
    1.0 - Normal::standard().cdf(3.0)
}

/// Two-sided z threshold such that `k` simultaneous comparisons have a
/// family-wise false-alarm rate equal to a single two-sided 3-sigma test.
pub fn bonferroni_z(k: usize) -> f64 {
    let alpha = 2.0 * three_sigma_tail() / k.max(1) as f64;
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Loose multinomial bound on the total-variation distance between an
/// empirical histogram of `n` samples and the true law over `k` states:
/// `3 sqrt(k / n)`.
pub fn tv_three_sigma_bound(k: usize, n: usize) -> f64 {
    3.0 * (k as f64 / n as f64).sqrt()
}

/// Sharper bound: `E[TV] <= 1/2 sum sqrt(p (1-p) / n)` plus a McDiarmid
/// deviation with the same tail mass as a one-sided 3-sigma event.
pub fn tv_sharp_bound(probs: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    let expected: f64 = 0.5 * probs.iter().map(|&p| (p.max(0.0) * (1.0 - p).max(0.0) / nf).sqrt()).sum::<f64>();
    expected + ((1.0 / three_sigma_tail()).ln() / (2.0 * nf)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let s = MeanStderr::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(MeanStderr::from_samples(&[]).mean.is_nan());
    }

    #[test]
    fn thresholds() {
        assert!((bonferroni_z(1) - 3.0).abs() < 1e-9);
        assert!(bonferroni_z(100) > 3.0);
        assert!((tv_three_sigma_bound(512, 100_000) - 0.2146).abs() < 1e-3);
        let uniform = vec![1.0 / 512.0; 512];
        assert!(tv_sharp_bound(&uniform, 100_000) < tv_three_sigma_bound(512, 100_000));
    }
}
