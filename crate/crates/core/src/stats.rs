//! Estimators with confidence intervals and deterministic reductions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Default two-sided confidence level.
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Binomial proportion with a Wilson score interval.
    Wilson,
    /// Sample mean with a normal-approximation interval.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_err: f64,
    pub replicas: u64,
    pub confidence: f64,
    pub kind: EstimatorKind,
}

/// Two-sided standard normal quantile for `confidence`.
pub fn z_value(confidence: f64) -> f64 {
    assert!(
        confidence > 0.0 && confidence < 1.0,
        "confidence must lie in (0, 1)"
    );
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + confidence / 2.0)
}

impl Estimate {
    /// Wilson score interval for `successes` out of `trials`.
    pub fn wilson(successes: u64, trials: u64, confidence: f64) -> Self {
        assert!(trials >= 1, "at least one trial is required");
        assert!(successes <= trials);
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = z_value(confidence);
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Estimate {
            mean: p,
            ci_low: (center - half).max(0.0).min(p),
            ci_high: (center + half).min(1.0).max(p),
            std_err: (p * (1.0 - p) / n).sqrt(),
            replicas: trials,
            confidence,
            kind: EstimatorKind::Wilson,
        }
    }

    /// Normal interval for the mean of `samples` (order-insensitive up to
    /// the pairwise reduction, which is fixed by sample order).
    pub fn normal_mean(samples: &[f64], confidence: f64) -> Self {
        assert!(samples.len() >= 2, "a mean estimate needs two replicas");
        let n = samples.len() as f64;
        let mean = pairwise_sum(samples) / n;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0);
        let se = (var / n).sqrt();
        let half = z_value(confidence) * se;
        Estimate {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            std_err: se,
            replicas: samples.len() as u64,
            confidence,
            kind: EstimatorKind::Normal,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// Pairwise (cascade) summation; result depends only on slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Linear interpolation quantile of already sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Runs `f(0..n)` either serially (`threads == 1`) or on a dedicated rayon
/// pool. Output order is the index order in both cases.
pub fn run_replicas<T, F>(n: u64, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if threads <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{replica_rng, Domain};
    use rand::Rng;

    #[test]
    fn z_for_95_percent() {
        assert!((z_value(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn wilson_contains_point_estimate_and_stays_in_unit_interval() {
        for (s, n) in [(0, 10), (10, 10), (3, 7), (1, 100_000)] {
            let e = Estimate::wilson(s, n, 0.95);
            assert!(e.ci_low <= e.mean && e.mean <= e.ci_high);
            assert!(e.ci_low >= 0.0 && e.ci_high <= 1.0);
        }
        let e = Estimate::wilson(0, 200, 0.95);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0);
    }

    #[test]
    fn wilson_coverage_on_bernoulli() {
        // 1000 meta-replicas of a Bernoulli(0.3) experiment with 200 draws.
        let mut covered = 0;
        for k in 0..1000 {
            let mut rng = replica_rng(2024, Domain::Meta, k);
            let hits = (0..200).filter(|_| rng.gen::<f64>() < 0.3).count() as u64;
            if Estimate::wilson(hits, 200, 0.95).contains(0.3) {
                covered += 1;
            }
        }
        assert!(covered >= 930, "coverage {covered}/1000");
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(|x| x as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn replicas_identical_across_thread_counts() {
        let f = |i: u64| {
            let mut r = replica_rng(9, Domain::Walk, i);
            r.gen::<f64>()
        };
        assert_eq!(run_replicas(257, 1, f), run_replicas(257, 3, f));
    }

    #[test]
    fn quantiles_and_slope() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 2.0);
        let y: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((ols_slope(&xs, &y) - 3.0).abs() < 1e-12);
    }
}
