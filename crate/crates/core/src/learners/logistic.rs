use serde::{Deserialize, Serialize};

use super::vector_features;
use crate::error::{AuditError, Result};
use crate::types::{Dataset, Instance, Label, Prediction};

/// Multinomial logistic regression.
///
/// Only classes that occur in the training set get a weight row; the rest
/// receive probability 0, which keeps the unpenalised intercepts bounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `rows[k]` holds `d` weights followed by the intercept of `classes[k]`.
    pub rows: Vec<Vec<f64>>,
    pub classes: Vec<usize>,
    pub num_classes: usize,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem {
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    k: usize,
    d: usize,
    inv_c: f64,
}

impl Problem {
    fn scores(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let stride = self.d + 1;
        for (c, s) in out.iter_mut().enumerate() {
            let row = &w[c * stride..(c + 1) * stride];
            *s = row[self.d] + row[..self.d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let mut s = vec![0.0; self.k];
        let mut total = 0.0;
        for (x, &y) in self.xs.iter().zip(&self.ys) {
            self.scores(w, x, &mut s);
            total += log_sum_exp(&s) - s[y];
        }
        total + 0.5 * self.inv_c * self.penalty_norm(w)
    }

    fn penalty_norm(&self, w: &[f64]) -> f64 {
        w.chunks(self.d + 1)
            .map(|row| row[..self.d].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Returns the objective and writes its gradient.
    fn gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let stride = self.d + 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut s = vec![0.0; self.k];
        let mut total = 0.0;
        for (x, &y) in self.xs.iter().zip(&self.ys) {
            self.scores(w, x, &mut s);
            let lse = log_sum_exp(&s);
            total += lse - s[y];
            for c in 0..self.k {
                let r = (s[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                let g = &mut grad[c * stride..(c + 1) * stride];
                for j in 0..self.d {
                    g[j] += r * x[j];
                }
                g[self.d] += r;
            }
        }
        for c in 0..self.k {
            for j in 0..self.d {
                grad[c * stride + j] += self.inv_c * w[c * stride + j];
            }
        }
        total + 0.5 * self.inv_c * self.penalty_norm(w)
    }
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl LogisticModel {
    /// Minimises summed cross-entropy plus `‖W‖²/(2c)` (intercepts excluded)
    /// by full-batch gradient descent from zero with a backtracking
    /// (Armijo) line search. The step grows by 2 after each accepted step,
    /// up to the inverse Lipschitz bound, and halves on each rejection.
    pub fn fit(dataset: &Dataset, c: f64, max_iter: usize, tol: f64) -> Result<LogisticModel> {
        let num_classes = dataset.num_classes().unwrap_or(0);
        let mut present = vec![false; num_classes];
        let mut raw = Vec::with_capacity(dataset.len());
        for e in dataset.examples() {
            let x = e.instance.features()?.into_owned();
            match e.label {
                Label::Class(y) => {
                    present[y] = true;
                    raw.push((x, y));
                }
                other => return Err(AuditError::kind_mismatch("class label", other.name())),
            }
        }
        let classes: Vec<usize> = (0..num_classes).filter(|&c| present[c]).collect();
        let mut slot = vec![usize::MAX; num_classes];
        for (i, &c) in classes.iter().enumerate() {
            slot[c] = i;
        }
        let d = raw[0].0.len();
        // Optimise over centred features; the weights are unchanged and only
        // the intercept shifts, but conditioning improves considerably.
        let mut mean = vec![0.0; d];
        for (x, _) in &raw {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= raw.len() as f64);
        let (xs, ys) = raw
            .into_iter()
            .map(|(x, y)| (x.iter().zip(&mean).map(|(a, m)| a - m).collect(), slot[y]))
            .unzip();
        let p = Problem {
            xs,
            ys,
            k: classes.len(),
            d,
            inv_c: 1.0 / c,
        };

        let dim = p.k * (d + 1);
        let mut w = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        let mut trial = vec![0.0; dim];
        let mut f = p.gradient(&w, &mut grad);
        // 1/L for the gradient's Lipschitz constant: the softmax Hessian is
        // bounded by ½·X̃ᵀX̃ (X̃ with a ones column) plus the penalty
        let mut gram = nalgebra::DMatrix::<f64>::zeros(d + 1, d + 1);
        for x in &p.xs {
            let xt = nalgebra::DVector::from_iterator(d + 1, x.iter().cloned().chain(std::iter::once(1.0)));
            gram += &xt * xt.transpose();
        }
        let lambda_max = gram.symmetric_eigenvalues().max();
        let max_step = 1.0 / (0.5 * lambda_max + p.inv_c);
        let mut step = max_step;
        let mut converged = false;
        let mut iterations = 0;

        // a single class needs no optimisation: it always gets probability 1
        if p.k <= 1 {
            converged = true;
        }
        while !converged && iterations < max_iter {
            let gn = norm(&grad);
            if gn <= tol {
                converged = true;
                break;
            }
            let mut accepted = false;
            for _ in 0..80 {
                for ((t, wv), g) in trial.iter_mut().zip(&w).zip(&grad) {
                    *t = wv - step * g;
                }
                let ft = p.objective(&trial);
                // slack of a few ulps so that steps below the objective's
                // resolution still count; the gradient keeps shrinking there
                if ft <= f - 0.5 * step * gn * gn + 8.0 * f64::EPSILON * f.abs() {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // no representable descent left: the iterate is as good as it gets
                break;
            }
            std::mem::swap(&mut w, &mut trial);
            f = p.gradient(&w, &mut grad);
            step = (2.0 * step).min(max_step);
            iterations += 1;
        }
        if !converged && norm(&grad) <= tol {
            converged = true;
        }

        let rows = w
            .chunks(d + 1)
            .map(|r| {
                let mut r = r.to_vec();
                r[d] -= r[..d].iter().zip(&mean).map(|(a, m)| a * m).sum::<f64>();
                r
            })
            .collect();
        Ok(LogisticModel {
            rows,
            classes,
            num_classes,
            iterations,
            converged,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len() - 1)
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let d = self.dim();
        let x = vector_features(instance, d)?;
        let mut out = vec![0.0; self.num_classes];
        if self.classes.len() == 1 {
            out[self.classes[0]] = 1.0;
            return Ok(Prediction::ClassDistribution(out));
        }
        let s: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r[d] + r[..d].iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let lse = log_sum_exp(&s);
        for (c, v) in self.classes.iter().zip(&s) {
            out[*c] = (v - lse).exp();
        }
        Ok(Prediction::ClassDistribution(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Example;

    fn blobs() -> Dataset {
        let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut ex = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            let jitter = [((i * 7) % 5) as f64 * 0.05 - 0.1, ((i * 11) % 5) as f64 * 0.05 - 0.1];
            ex.push(Example::new(
                Instance::Dense(vec![centers[c][0] + jitter[0], centers[c][1] + jitter[1]]),
                Label::Class(c),
            ));
        }
        Dataset::new(ex, "t").unwrap()
    }

    #[test]
    fn converges_to_a_stationary_point() {
        let m = LogisticModel::fit(&blobs(), 1.0, 20_000, 1e-8).unwrap();
        assert!(m.converged, "iterations {}", m.iterations);
    }

    #[test]
    fn perturbation_never_improves_objective() {
        let ds = blobs();
        let m = LogisticModel::fit(&ds, 1.0, 20_000, 1e-9).unwrap();
        let p = Problem {
            xs: ds.examples().iter().map(|e| e.instance.features().unwrap().into_owned()).collect(),
            ys: ds
                .examples()
                .iter()
                .map(|e| match e.label {
                    Label::Class(y) => y,
                    _ => unreachable!(),
                })
                .collect(),
            k: 3,
            d: 2,
            inv_c: 1.0,
        };
        let w: Vec<f64> = m.rows.concat();
        let f0 = p.objective(&w);
        for i in 0..w.len() {
            for h in [1e-4, -1e-4] {
                let mut v = w.clone();
                v[i] += h;
                assert!(p.objective(&v) >= f0 - 1e-10);
            }
        }
    }

    #[test]
    fn distributions_are_normalised_and_fit_training_data() {
        let ds = blobs();
        let m = LogisticModel::fit(&ds, 1.0, 5000, 1e-6).unwrap();
        for e in ds.examples() {
            let p = m.predict(&e.instance).unwrap();
            p.validate().unwrap();
            assert_eq!(Some(match e.label {
                Label::Class(y) => y,
                _ => unreachable!(),
            }), p.argmax());
        }
    }

    #[test]
    fn absent_class_gets_zero_probability() {
        let ds = Dataset::new(
            vec![
                Example::new(Instance::Dense(vec![0.0]), Label::Class(0)),
                Example::new(Instance::Dense(vec![1.0]), Label::Class(2)),
            ],
            "t",
        )
        .unwrap();
        let m = LogisticModel::fit(&ds, 1.0, 1000, 1e-8).unwrap();
        match m.predict(&Instance::Dense(vec![0.5])).unwrap() {
            Prediction::ClassDistribution(p) => {
                assert_eq!(p.len(), 3);
                assert_eq!(p[1], 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
