use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::{rng_for, GameRng};
use crate::types::{BitVector, Dataset, Example, Instance, Label};

/// Labelling rule for binary hypercube data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Distinct instances with unique labels `1..=n`.
    Singleton,
    /// Labels uniform over `0..c`.
    KClasses(usize),
}

fn random_bits(rng: &mut GameRng, d: usize) -> BitVector {
    let mut v = BitVector::zeros(d);
    for j in 0..d {
        v.set(j, rng.random::<bool>());
    }
    v
}

/// `n` instances uniform on `{0,1}^d`.
///
/// Singleton mode resamples collisions so all instances are distinct and
/// labels the i-th one `i + 1`; the label space is `0..=n` with class 0
/// unused.
pub fn gen_uniform_hypercube(n: usize, d: usize, mode: LabelMode, rng: &mut GameRng) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(AuditError::EmptyDataset);
    }
    let mut ex = Vec::with_capacity(n);
    match mode {
        LabelMode::Singleton => {
            if d < 64 && (n as u128) > (1u128 << d) {
                return Err(AuditError::InfeasibleSingleton { n, d });
            }
            let mut seen = HashSet::with_capacity(n);
            while ex.len() < n {
                let x = random_bits(rng, d);
                if seen.insert(x.clone()) {
                    let label = ex.len() + 1;
                    ex.push(Example::new(Instance::Binary(x), Label::Class(label)));
                }
            }
            Dataset::new(ex, format!("uniform_hypercube(n={n},d={d},singleton)"))?.with_num_classes(n + 1)
        }
        LabelMode::KClasses(c) => {
            if c == 0 {
                return Err(AuditError::config("data.label_mode.k_classes", "must be at least 1"));
            }
            for _ in 0..n {
                let x = random_bits(rng, d);
                ex.push(Example::new(Instance::Binary(x), Label::Class(rng.random_range(0..c))));
            }
            Dataset::new(ex, format!("uniform_hypercube(n={n},d={d},k_classes={c})"))?.with_num_classes(c)
        }
    }
}

/// Hidden weight vector for a regression distribution; fixed by its seed.
pub fn regression_weights(d: usize, distribution_seed: u64) -> Vec<f64> {
    let mut rng = rng_for(distribution_seed, 0, "regression-weights");
    (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub(crate) fn linear_example(w: &[f64], noise_sigma: f64, rng: &mut GameRng) -> Example {
    let x: Vec<f64> = (0..w.len()).map(|_| rng.random::<f64>()).collect();
    let mut y: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
    if noise_sigma > 0.0 {
        y += noise_sigma * Distribution::<f64>::sample(&StandardNormal, rng);
    }
    Example::new(Instance::Dense(x), Label::Real(y))
}

/// `y = <w, x> + N(0, σ²)` with `x` uniform on `[0,1]^d` and `w` drawn once
/// from the seed.
pub fn gen_linear_regression(n: usize, d: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    let w = regression_weights(d, seed);
    let mut rng = rng_for(seed, 1, "regression-samples");
    sample_linear(&w, n, noise_sigma, &mut rng)
}

pub(crate) fn sample_linear(w: &[f64], n: usize, noise_sigma: f64, rng: &mut GameRng) -> Result<Dataset> {
    if n == 0 || w.is_empty() {
        return Err(AuditError::EmptyDataset);
    }
    let ex = (0..n).map(|_| linear_example(w, noise_sigma, rng)).collect();
    Dataset::new(ex, format!("linear_regression(n={n},d={},sigma={noise_sigma})", w.len()))
}

/// Blob centres: the standard basis vectors when `d >= classes`, otherwise
/// points on the unit circle in the first two coordinates.
pub fn blob_centers(d: usize, classes: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut v = vec![0.0; d];
            if d >= classes {
                v[c] = 1.0;
            } else {
                let t = std::f64::consts::TAU * c as f64 / classes as f64;
                v[0] = t.cos();
                if d > 1 {
                    v[1] = t.sin();
                }
            }
            v
        })
        .collect()
}

/// Per-class sample counts: `n / classes` each, the remainder going to the
/// first classes.
pub fn blob_counts(n: usize, classes: usize) -> Vec<usize> {
    (0..classes).map(|c| n / classes + usize::from(c < n % classes)).collect()
}

pub(crate) fn blob_point(center: &[f64], spread: f64, rng: &mut GameRng) -> Vec<f64> {
    let noise = Normal::new(0.0, spread).expect("spread validated as finite and non-negative");
    center.iter().map(|c| c + noise.sample(rng)).collect()
}

/// Isotropic Gaussian blobs, generated class by class.
pub fn gen_blobs(n: usize, d: usize, classes: usize, spread: f64, rng: &mut GameRng) -> Result<Dataset> {
    if classes < 2 {
        return Err(AuditError::config("data.classes", "must be at least 2"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(AuditError::config("data.spread", "must be a non-negative finite number"));
    }
    if n == 0 || d == 0 {
        return Err(AuditError::EmptyDataset);
    }
    let centers = blob_centers(d, classes);
    let mut ex = Vec::with_capacity(n);
    for (c, count) in blob_counts(n, classes).into_iter().enumerate() {
        for _ in 0..count {
            ex.push(Example::new(Instance::Dense(blob_point(&centers[c], spread, rng)), Label::Class(c)));
        }
    }
    Dataset::new(ex, format!("blobs(n={n},d={d},classes={classes},spread={spread})"))?.with_num_classes(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit_ols, train, LearnerSpec};
    use crate::types::{empirical_risk, LossKind};

    #[test]
    fn singleton_exhausts_small_cube() {
        let mut rng = rng_for(3, 0, "t");
        let ds = gen_uniform_hypercube(4, 2, LabelMode::Singleton, &mut rng).unwrap();
        let mut xs: Vec<Vec<u8>> = ds
            .examples()
            .iter()
            .map(|e| match &e.instance {
                Instance::Binary(b) => b.bits(),
                _ => unreachable!(),
            })
            .collect();
        xs.sort();
        assert_eq!(xs, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        let labels: Vec<Label> = ds.examples().iter().map(|e| e.label).collect();
        assert_eq!(labels, (1..=4).map(Label::Class).collect::<Vec<_>>());
        assert!(matches!(
            gen_uniform_hypercube(5, 2, LabelMode::Singleton, &mut rng),
            Err(AuditError::InfeasibleSingleton { n: 5, d: 2 })
        ));
    }

    #[test]
    fn coordinates_are_balanced() {
        let mut rng = rng_for(9, 0, "t");
        let ds = gen_uniform_hypercube(10_000, 8, LabelMode::KClasses(3), &mut rng).unwrap();
        for j in 0..8 {
            let mean = ds
                .examples()
                .iter()
                .map(|e| e.instance.features().unwrap()[j])
                .sum::<f64>()
                / 10_000.0;
            assert!((mean - 0.5).abs() < 0.02, "coordinate {j}: {mean}");
        }
    }

    #[test]
    fn noiseless_regression_is_recovered() {
        let ds = gen_linear_regression(60, 5, 0.0, 11).unwrap();
        let m = fit_ols(&ds).unwrap();
        let w = regression_weights(5, 11);
        for (a, b) in m.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-8);
        }
        let model = train(&LearnerSpec::Ols, &ds, 0).unwrap();
        assert!(empirical_risk(&model, &ds, LossKind::Squared).unwrap() < 1e-20);
    }

    #[test]
    fn regression_noise_stays_in_gaussian_tail() {
        let sigma = 0.1;
        let ds = gen_linear_regression(20_000, 1, sigma, 5).unwrap();
        let w = regression_weights(1, 5)[0];
        let outside = ds
            .examples()
            .iter()
            .filter(|e| {
                let x = e.instance.features().unwrap()[0];
                let Label::Real(y) = e.label else { unreachable!() };
                (y - w * x).abs() > 4.0 * sigma
            })
            .count();
        // P(|Z| > 4) ≈ 6.3e-5, so about 1.3 of 20,000 points
        assert!(outside <= 6, "{outside}");
    }

    #[test]
    fn blob_counts_follow_remainder_rule() {
        assert_eq!(blob_counts(10, 3), vec![4, 3, 3]);
        assert_eq!(blob_counts(135, 3), vec![45, 45, 45]);
    }

    #[test]
    fn tight_blobs_are_separable() {
        let mut rng = rng_for(1, 0, "t");
        let train_ds = gen_blobs(60, 3, 3, 1e-3, &mut rng).unwrap();
        let test_ds = gen_blobs(60, 3, 3, 1e-3, &mut rng).unwrap();
        let m = train(&LearnerSpec::Knn { k: 1 }, &train_ds, 0).unwrap();
        assert_eq!(empirical_risk(&m, &test_ds, LossKind::ZeroOne).unwrap(), 0.0);
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_blobs(30, 4, 3, 0.3, &mut rng_for(4, 2, "x")).unwrap();
        let b = gen_blobs(30, 4, 3, 0.3, &mut rng_for(4, 2, "x")).unwrap();
        assert_eq!(a, b);
        assert_eq!(gen_linear_regression(10, 3, 0.1, 8).unwrap(), gen_linear_regression(10, 3, 0.1, 8).unwrap());
    }
}
