use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `wins` successes out of `trials`.
pub fn wilson_interval(wins: u64, trials: u64) -> (f64, f64) {
    assert!(trials >= 1 && wins <= trials, "need 0 <= wins <= trials and trials >= 1");
    let n = trials as f64;
    let p = wins as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `2|a ∩ b| / (|a| + |b|)` over token multisets; 1 when both are empty.
pub fn multiset_f1(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &t in a {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for &t in b {
        if let Some(c) = counts.get_mut(&t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

/// Win rate of an inference game with its Wilson interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub wins: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `sqrt(p(1−p)/n)` at the point estimate.
    pub std_error: f64,
    /// Guesses decided by a coin.
    pub ties: u64,
    pub mean_queries_before: f64,
    pub mean_queries_after: f64,
}

impl SuccessStats {
    pub fn from_counts(wins: u64, trials: u64, ties: u64, queries_before: u64, queries_after: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(wins, trials);
        let n = trials as f64;
        let estimate = wins as f64 / n;
        SuccessStats {
            wins,
            trials,
            estimate,
            ci_low,
            ci_high,
            std_error: (estimate * (1.0 - estimate) / n).sqrt(),
            ties,
            mean_queries_before: queries_before as f64 / n,
            mean_queries_after: queries_after as f64 / n,
        }
    }
}

/// Summary of reconstruction distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecStats {
    pub trials: u64,
    pub eps: f64,
    pub distances: Vec<f64>,
    pub mean_distance: f64,
    pub std_error: f64,
    /// Fraction of trials with distance at most `eps`.
    pub rho_at_eps: f64,
    /// `1 − mean distance`, for metrics bounded by 1.
    pub expected_accuracy: Option<f64>,
    pub exact_match: f64,
    /// Mean multiset F1, for sequence guesses.
    pub f1_mean: Option<f64>,
    /// Trials where the attack fell back to a default answer.
    pub degenerate: u64,
}

impl RecStats {
    pub fn new(eps: f64, bounded: bool, distances: Vec<f64>, exact: &[bool], f1: &[f64], degenerate: u64) -> Self {
        let n = distances.len().max(1) as f64;
        let (mean, se) = mean_and_se(&distances);
        RecStats {
            trials: distances.len() as u64,
            eps,
            mean_distance: mean,
            std_error: se,
            rho_at_eps: distances.iter().filter(|&&d| d <= eps).count() as f64 / n,
            expected_accuracy: bounded.then_some(1.0 - mean),
            exact_match: exact.iter().filter(|&&e| e).count() as f64 / n,
            f1_mean: (!f1.is_empty()).then(|| f1.iter().sum::<f64>() / f1.len() as f64),
            degenerate,
            distances,
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent Wilson evaluation from the textbook closed form.
    fn wilson_oracle(w: f64, n: f64) -> (f64, f64) {
        let z = 1.96f64;
        let p = w / n;
        let a = p + z * z / (2.0 * n);
        let b = z * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt();
        let c = 1.0 + z * z / n;
        ((a - b) / c, (a + b) / c)
    }

    #[test]
    fn wilson_reference_points() {
        assert_eq!(wilson_interval(0, 1).0, 0.0);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert_abs_diff_eq!(0.5 - lo, hi - 0.5, epsilon = 1e-12);
        let (lo, hi) = wilson_interval(95, 100);
        let (olo, ohi) = wilson_oracle(95.0, 100.0);
        assert_abs_diff_eq!(lo, olo, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, ohi, epsilon = 1e-4);
        assert_abs_diff_eq!(lo, 0.887, epsilon = 2e-3);
        assert_abs_diff_eq!(hi, 0.977, epsilon = 2e-3);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(multiset_f1(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_abs_diff_eq!(multiset_f1(&[1, 2, 3], &[1, 2, 4]), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(multiset_f1(&[1, 1, 2], &[1, 2]), 0.8, epsilon = 1e-12);
        assert_eq!(multiset_f1(&[], &[]), 1.0);
        assert_eq!(multiset_f1(&[1], &[]), 0.0);
    }

    #[test]
    fn success_stats_bracket_the_estimate() {
        let s = SuccessStats::from_counts(7, 10, 1, 20, 20);
        assert!(s.ci_low <= s.estimate && s.estimate <= s.ci_high);
        assert_eq!(s.mean_queries_before, 2.0);
    }
}
