use super::linear::column_means;
use super::{real_design, LinearModel};
use crate::error::Result;
use crate::types::Dataset;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimises `(1/2n)·‖y − Xw − b‖² + alpha·‖w‖₁` by cyclic coordinate
/// descent on centred data.
///
/// Stops when the largest coordinate update in a sweep is at most `tol`, or
/// after `max_sweeps` sweeps with `converged = false`.
pub fn fit_lasso(dataset: &Dataset, alpha: f64, tol: f64, max_sweeps: usize) -> Result<LinearModel> {
    let (xs, ys) = real_design(dataset)?;
    let n = xs.len();
    let d = xs[0].len();
    let nf = n as f64;
    let xm = column_means(&xs);
    let ym = ys.iter().sum::<f64>() / nf;

    // column-major centred design
    let cols: Vec<Vec<f64>> = (0..d).map(|j| xs.iter().map(|x| x[j] - xm[j]).collect()).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut resid: Vec<f64> = ys.iter().map(|y| y - ym).collect();
    let mut w = vec![0.0; d];
    let mut converged = false;

    for _ in 0..max_sweeps {
        let mut max_step = 0.0f64;
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let old = w[j];
            let rho = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / nf + sq[j] * old;
            let new = soft_threshold(rho, alpha) / sq[j];
            let step = new - old;
            if step != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= step * x;
                }
                w[j] = new;
            }
            max_step = max_step.max(step.abs());
        }
        if max_step <= tol {
            converged = true;
            break;
        }
    }

    let intercept = ym - w.iter().zip(&xm).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel {
        weights: w,
        intercept,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Example, Instance, Label};

    fn data() -> Dataset {
        let ex = (0..40)
            .map(|i| {
                let a = (i % 7) as f64 / 7.0;
                let b = (i % 5) as f64 / 5.0;
                let c = ((i * 3) % 11) as f64 / 11.0;
                let y = 2.0 * a - 1.0 * b + 0.05 * ((i * 13) % 7) as f64;
                Example::new(Instance::Dense(vec![a, b, c]), Label::Real(y))
            })
            .collect();
        Dataset::new(ex, "t").unwrap()
    }

    #[test]
    fn kkt_conditions_hold() {
        let ds = data();
        let alpha = 0.05;
        let m = fit_lasso(&ds, alpha, 1e-12, 100_000).unwrap();
        assert!(m.converged);
        let (xs, ys) = real_design(&ds).unwrap();
        let n = xs.len() as f64;
        for j in 0..3 {
            let g: f64 = xs.iter().zip(&ys).map(|(x, y)| x[j] * (y - m.value(x))).sum::<f64>() / n;
            if m.weights[j] != 0.0 {
                assert!((g - alpha * m.weights[j].signum()).abs() < 1e-6, "j={j} g={g}");
            } else {
                assert!(g.abs() <= alpha + 1e-6, "j={j} g={g}");
            }
        }
    }

    #[test]
    fn large_alpha_zeroes_everything() {
        let m = fit_lasso(&data(), 100.0, 1e-8, 10_000).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn sweep_cap_reports_non_convergence() {
        let m = fit_lasso(&data(), 1e-4, 1e-30, 1).unwrap();
        assert!(!m.converged);
    }
}
