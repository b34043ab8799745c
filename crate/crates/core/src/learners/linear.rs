use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{real_design, vector_features};
use crate::error::{AuditError, Result};
use crate::types::{Dataset, Instance, Prediction};

/// `h(x) = <w, x> + b`. Shared by OLS, ridge and lasso.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
}

impl LinearModel {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let x = vector_features(instance, self.weights.len())?;
        Ok(Prediction::RealValue(self.value(&x)))
    }
}

/// Least squares with intercept.
///
/// Solved through an SVD of the augmented design matrix, which yields the
/// normal-equation solution when `XᵀX` is invertible and the minimum-norm
/// (pseudo-inverse) solution otherwise.
pub fn fit_ols(dataset: &Dataset) -> Result<LinearModel> {
    let (xs, ys) = real_design(dataset)?;
    let n = xs.len();
    let d = xs[0].len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { xs[i][j] } else { 1.0 });
    let b = DVector::from_vec(ys);
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (n.max(d + 1) as f64) * sigma_max * f64::EPSILON;
    let sol = svd
        .solve(&b, eps)
        .map_err(|e| AuditError::InvalidArgument(format!("least squares failed: {e}")))?;
    Ok(LinearModel {
        weights: sol.as_slice()[..d].to_vec(),
        intercept: sol[d],
        converged: true,
    })
}

pub(crate) fn column_means(xs: &[Vec<f64>]) -> Vec<f64> {
    let d = xs[0].len();
    let mut m = vec![0.0; d];
    for x in xs {
        for (mj, v) in m.iter_mut().zip(x) {
            *mj += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= xs.len() as f64);
    m
}

/// Ridge regression; the intercept is not penalised.
pub fn fit_ridge(dataset: &Dataset, alpha: f64) -> Result<LinearModel> {
    let (xs, ys) = real_design(dataset)?;
    let n = xs.len();
    let d = xs[0].len();
    let xm = column_means(&xs);
    let ym = ys.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| xs[i][j] - xm[j]);
    let yc = DVector::from_iterator(n, ys.iter().map(|y| y - ym));
    let gram = xc.transpose() * &xc + DMatrix::identity(d, d) * alpha;
    let rhs = xc.transpose() * yc;
    let w = gram
        .cholesky()
        .ok_or_else(|| AuditError::InvalidArgument("ridge system is not positive definite".into()))?
        .solve(&rhs);
    let intercept = ym - w.iter().zip(&xm).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel {
        weights: w.as_slice().to_vec(),
        intercept,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Example, Label};

    fn ds(points: &[(Vec<f64>, f64)]) -> Dataset {
        Dataset::new(
            points
                .iter()
                .map(|(x, y)| Example::new(Instance::Dense(x.clone()), Label::Real(*y)))
                .collect(),
            "t",
        )
        .unwrap()
    }

    #[test]
    fn two_point_interpolation() {
        let m = fit_ols(&ds(&[(vec![0.0], 0.0), (vec![1.0], 1.0)])).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        assert!(m.intercept.abs() < 1e-12);
    }

    #[test]
    fn singular_design_uses_pseudo_inverse() {
        // duplicated column and a single point: infinitely many solutions
        let m = fit_ols(&ds(&[(vec![1.0, 1.0], 2.0)])).unwrap();
        assert!((m.value(&[1.0, 1.0]) - 2.0).abs() < 1e-12);
        // minimum norm spreads weight evenly over the identical columns
        assert!((m.weights[0] - m.weights[1]).abs() < 1e-12);
    }

    #[test]
    fn normal_equation_residual_is_orthogonal() {
        let pts: Vec<(Vec<f64>, f64)> = (0..20)
            .map(|i| {
                let a = i as f64 / 7.0;
                let b = ((i * 7919) % 13) as f64 / 13.0;
                (vec![a, b], 3.0 * a - 2.0 * b + ((i * 31) % 5) as f64 * 0.01)
            })
            .collect();
        let m = fit_ols(&ds(&pts)).unwrap();
        let mut grad = [0.0; 3];
        for (x, y) in &pts {
            let r = m.value(x) - y;
            grad[0] += r * x[0];
            grad[1] += r * x[1];
            grad[2] += r;
        }
        assert!(grad.iter().all(|g| g.abs() < 1e-9), "{grad:?}");
    }

    #[test]
    fn ridge_shrinks_towards_zero() {
        let pts: Vec<(Vec<f64>, f64)> = (0..10).map(|i| (vec![i as f64], 2.0 * i as f64)).collect();
        let small = fit_ridge(&ds(&pts), 1e-9).unwrap();
        let big = fit_ridge(&ds(&pts), 1e3).unwrap();
        assert!((small.weights[0] - 2.0).abs() < 1e-6);
        assert!(big.weights[0].abs() < small.weights[0].abs());
    }
}
