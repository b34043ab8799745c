use rand::Rng;
use rayon::prelude::*;

use super::{AttackContext, Observation, RecGuess, RecOutput, ReconstructionAttacker};
use crate::data::DatasetDistribution;
use crate::error::{AuditError, Result};
use crate::learners::{predict, train, LearnerSpec};
use crate::oracle::Oracle;
use crate::rng::{derive_seed, rng_for, GameRng};
use crate::types::{BitVector, Example, Instance, Label, Prediction};

/// Per-feature `(min, max)` over the instances of `aux`.
pub fn probe_box(aux: &[Example]) -> Result<Vec<(f64, f64)>> {
    let first = aux.first().ok_or_else(|| AuditError::InvalidArgument("probe box needs auxiliary data".into()))?;
    let mut bounds: Vec<(f64, f64)> = first.instance.features()?.iter().map(|&v| (v, v)).collect();
    for e in &aux[1..] {
        for (b, v) in bounds.iter_mut().zip(e.instance.features()?.iter()) {
            b.0 = b.0.min(*v);
            b.1 = b.1.max(*v);
        }
    }
    Ok(bounds)
}

/// `m` probes uniform over the bounding box of the auxiliary data. Binary
/// instances get uniform bits on the coordinates that vary.
pub(crate) fn sample_probes(aux: &[Example], m: usize, rng: &mut GameRng) -> Result<Vec<Instance>> {
    let bounds = probe_box(aux)?;
    let binary = matches!(aux[0].instance, Instance::Binary(_));
    Ok((0..m)
        .map(|_| {
            if binary {
                let mut v = BitVector::zeros(bounds.len());
                for (j, (lo, hi)) in bounds.iter().enumerate() {
                    v.set(j, if lo == hi { *lo > 0.5 } else { rng.random::<bool>() });
                }
                Instance::Binary(v)
            } else {
                Instance::Dense(
                    bounds
                        .iter()
                        .map(|(lo, hi)| if lo == hi { *lo } else { rng.random_range(*lo..*hi) })
                        .collect(),
                )
            }
        })
        .collect())
}

/// `Σ_i (Pr[ŷ′_i = c] − Pr[ŷ_i = c])` for every class `c`, querying the
/// probes on `after`.
pub(crate) fn class_mass_change(before: &[Prediction], probes: &[Instance], after: &mut Oracle) -> Result<Vec<f64>> {
    let mut change: Vec<f64> = Vec::new();
    for (p, x) in before.iter().zip(probes) {
        let q = after.query(x)?;
        let (Prediction::ClassDistribution(p), Prediction::ClassDistribution(q)) = (p, &q) else {
            return Err(AuditError::kind_mismatch("class distribution", q.name()));
        };
        let n = p.len().max(q.len());
        if change.len() < n {
            change.resize(n, 0.0);
        }
        for (c, slot) in change.iter_mut().enumerate().take(n) {
            *slot += q.get(c).copied().unwrap_or(0.0) - p.get(c).copied().unwrap_or(0.0);
        }
    }
    Ok(change)
}

/// Smallest index among the minima.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Label reconstruction: the class whose total confidence over the probes
/// dropped the most. Ties go to the smallest class index.
pub fn del_lbl_rec(before: &mut Oracle, after: &mut Oracle, probes: &[Instance], num_classes: usize) -> Result<usize> {
    if probes.is_empty() {
        return Err(AuditError::InvalidArgument("label reconstruction needs at least one probe".into()));
    }
    let b = probes.iter().map(|x| before.query(x)).collect::<Result<Vec<_>>>()?;
    before.revoke();
    let mut change = class_mass_change(&b, probes, after)?;
    change.resize(num_classes.max(change.len()), 0.0);
    Ok(argmin(&change))
}

/// Draws probes uniformly over the box spanned by `ctx.aux`.
#[derive(Clone, Debug)]
pub struct DelLblRec {
    pub probes: usize,
}

impl ReconstructionAttacker for DelLblRec {
    fn name(&self) -> String {
        format!("del_lbl_rec[probes={}]", self.probes)
    }

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, rng: &mut GameRng) -> Result<Observation> {
        let probes = sample_probes(&ctx.aux, self.probes, rng)?;
        let predictions = probes.iter().map(|x| before.query(x)).collect::<Result<Vec<_>>>()?;
        Ok(Observation { predictions, instances: probes, ..Default::default() })
    }

    fn reconstruct(&self, ctx: &AttackContext, obs: Observation, after: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
        let mut change = class_mass_change(&obs.predictions, &obs.instances, after)?;
        change.resize(ctx.num_classes.unwrap_or(0).max(change.len()), 0.0);
        let degenerate = change.iter().all(|c| *c == 0.0);
        Ok(RecOutput { guess: RecGuess::Class(argmin(&change)), degenerate })
    }
}

/// `ỹ = ŷ + λ·(ŷ − ŷ′)`.
pub fn ins_rev_lbl_rec(x: &Instance, before: &mut Oracle, after: &mut Oracle, lambda: f64) -> Result<f64> {
    let y = scalar(before.query(x)?)?;
    before.revoke();
    let y_del = scalar(after.query(x)?)?;
    Ok(y + lambda * (y - y_del))
}

fn scalar(p: Prediction) -> Result<f64> {
    match p {
        Prediction::RealValue(v) => Ok(v),
        other => Err(AuditError::kind_mismatch("real prediction", other.name())),
    }
}

/// Known-instance label reconstruction by extrapolating the prediction
/// change.
#[derive(Clone, Debug)]
pub struct InsRevLblRec {
    pub lambda: f64,
}

impl ReconstructionAttacker for InsRevLblRec {
    fn name(&self) -> String {
        format!("ins_rev_lbl_rec[lambda={}]", self.lambda)
    }

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let x = ctx
            .known_instance
            .as_ref()
            .ok_or_else(|| AuditError::InvalidArgument("known-instance attack run without the instance".into()))?;
        Ok(Observation { scalars: vec![scalar(before.query(x)?)?], ..Default::default() })
    }

    fn reconstruct(&self, ctx: &AttackContext, obs: Observation, after: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
        let x = ctx
            .known_instance
            .as_ref()
            .ok_or_else(|| AuditError::InvalidArgument("known-instance attack run without the instance".into()))?;
        let y = obs.scalars[0];
        let y_del = scalar(after.query(x)?)?;
        Ok(RecOutput::new(RecGuess::Real(y + self.lambda * (y - y_del))))
    }
}

/// Picks λ from `grid` by simulating the known-instance game on datasets
/// the attacker samples itself. Returns the λ with the smallest mean
/// `|ỹ − y|`, the smallest λ among ties.
pub fn tune_lambda(
    spec: &LearnerSpec,
    attacker_data: &DatasetDistribution,
    grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(AuditError::InvalidArgument("lambda grid is empty".into()));
    }
    let pairs = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64, f64)> {
            let mut rng = rng_for(seed, t, "tune-data");
            let s = attacker_data.sample(&mut rng)?;
            let i = rng.random_range(0..s.len());
            let h = train(spec, &s, derive_seed(seed, t, "tune-train"))?;
            let h_del = train(spec, &s.without(&[i])?, derive_seed(seed, t, "tune-del"))?;
            let e = &s.examples()[i];
            let Label::Real(y) = e.label else {
                return Err(AuditError::kind_mismatch("real label", e.label.name()));
            };
            Ok((scalar(predict(&h, &e.instance)?)?, scalar(predict(&h_del, &e.instance)?)?, y))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut candidates = grid.to_vec();
    candidates.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, candidates[0]);
    for &lambda in &candidates {
        let err: f64 = pairs.iter().map(|(a, b, y)| (a + lambda * (a - b) - y).abs()).sum::<f64>() / pairs.len().max(1) as f64;
        if err < best.0 {
            best = (err, lambda);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataSpec;
    use crate::oracle::Phase;

    fn dist_oracle(d: Vec<f64>, phase: Phase) -> Oracle<'static> {
        Oracle::from_fn(move |_| Ok(Prediction::ClassDistribution(d.clone())), phase)
    }

    #[test]
    fn lbl_rec_returns_class_with_largest_drop() {
        let probes = vec![Instance::Dense(vec![0.0])];
        let mut before = dist_oracle(vec![0.5, 0.2, 0.3], Phase::BeforeDeletion);
        let mut after = dist_oracle(vec![0.2, 0.4, 0.4], Phase::AfterDeletion);
        assert_eq!(del_lbl_rec(&mut before, &mut after, &probes, 3).unwrap(), 0);
    }

    #[test]
    fn lbl_rec_tie_goes_to_class_zero() {
        let probes = vec![Instance::Dense(vec![0.0]); 4];
        let mut before = dist_oracle(vec![0.3, 0.3, 0.4], Phase::BeforeDeletion);
        let mut after = dist_oracle(vec![0.3, 0.3, 0.4], Phase::AfterDeletion);
        assert_eq!(del_lbl_rec(&mut before, &mut after, &probes, 3).unwrap(), 0);
    }

    #[test]
    fn extrapolation_formula() {
        let x = Instance::Dense(vec![0.0]);
        let mk = |v: f64, phase| Oracle::from_fn(move |_| Ok(Prediction::RealValue(v)), phase);
        let r = ins_rev_lbl_rec(&x, &mut mk(2.0, Phase::BeforeDeletion), &mut mk(1.5, Phase::AfterDeletion), 2.0);
        assert_eq!(r.unwrap(), 3.0);
        let r = ins_rev_lbl_rec(&x, &mut mk(2.0, Phase::BeforeDeletion), &mut mk(1.5, Phase::AfterDeletion), 0.0);
        assert_eq!(r.unwrap(), 2.0);
        let r = ins_rev_lbl_rec(&x, &mut mk(2.0, Phase::BeforeDeletion), &mut mk(2.0, Phase::AfterDeletion), 7.0);
        assert_eq!(r.unwrap(), 2.0);
    }

    #[test]
    fn tuning_edge_cases() {
        let dist = DatasetDistribution::new(DataSpec::LinearRegression { n: 30, d: 2, noise_sigma: 0.1 }, 1).unwrap();
        assert_eq!(tune_lambda(&LearnerSpec::Ols, &dist, &[0.0], 5, 0).unwrap(), 0.0);
        // a data-ignoring learner makes every λ equivalent
        assert_eq!(tune_lambda(&LearnerSpec::Constant, &dist, &[3.0, 1.0, 2.0], 5, 0).unwrap(), 1.0);
    }

    #[test]
    fn probes_stay_in_the_box() {
        let aux: Vec<Example> = [[0.0, 1.0], [2.0, -1.0], [1.0, 0.0]]
            .iter()
            .map(|x| Example::new(Instance::Dense(x.to_vec()), Label::Class(0)))
            .collect();
        let probes = sample_probes(&aux, 200, &mut rng_for(0, 0, "p")).unwrap();
        for p in probes {
            let f = p.features().unwrap();
            assert!((0.0..=2.0).contains(&f[0]) && (-1.0..=1.0).contains(&f[1]));
        }
    }
}
