use serde::{Deserialize, Serialize};

use super::{AttackContext, Observation, RecGuess, RecOutput, ReconstructionAttacker};
use crate::error::{AuditError, Result};
use crate::oracle::Oracle;
use crate::rng::GameRng;
use crate::types::{BitVector, Instance, Label};

/// Column-wise majority of binary vectors of dimension `d`. A column with
/// equally many ones and zeros gets 0.
pub fn coordinate_majority<'a>(points: impl IntoIterator<Item = &'a BitVector>, d: usize) -> BitVector {
    let mut ones = vec![0usize; d];
    let mut total = 0usize;
    for p in points {
        total += 1;
        for (j, c) in ones.iter_mut().enumerate() {
            *c += p.get(j) as usize;
        }
    }
    let mut out = BitVector::zeros(d);
    for (j, &c) in ones.iter().enumerate() {
        out.set(j, 2 * c > total);
    }
    out
}

fn binary(x: &Instance) -> Result<&BitVector> {
    match x {
        Instance::Binary(b) => Ok(b),
        other => Err(AuditError::kind_mismatch("binary instance", other.kind().to_string())),
    }
}

fn top_class(oracle: &mut Oracle, x: &Instance) -> Result<Option<usize>> {
    Ok(oracle.query(x)?.argmax())
}

/// Instance reconstruction from the points whose predicted class changed.
///
/// Returns the coordinate-wise majority of the disagreement set and `true`
/// when that set was empty (the instance is then all zeros).
pub fn del_ins_rec(before: &mut Oracle, after: &mut Oracle, aux: &[Instance]) -> Result<(Instance, bool)> {
    let d = binary(aux.first().ok_or_else(|| AuditError::InvalidArgument("aux set is empty".into()))?)?.len();
    let classes = aux.iter().map(|x| top_class(before, x)).collect::<Result<Vec<_>>>()?;
    before.revoke();
    disagreement_majority(aux, &classes, after, d)
}

fn disagreement_majority(
    aux: &[Instance],
    before: &[Option<usize>],
    after: &mut Oracle,
    d: usize,
) -> Result<(Instance, bool)> {
    let mut changed = Vec::new();
    for (x, c) in aux.iter().zip(before) {
        if top_class(after, x)? != *c {
            changed.push(binary(x)?);
        }
    }
    let empty = changed.is_empty();
    Ok((Instance::Binary(coordinate_majority(changed, d)), empty))
}

fn aux_instances(ctx: &AttackContext) -> Result<(Vec<Instance>, usize)> {
    let xs: Vec<Instance> = ctx.aux.iter().map(|e| e.instance.clone()).collect();
    let d = binary(xs.first().ok_or_else(|| AuditError::config("attacker.aux_size", "must be at least 1"))?)?.len();
    Ok((xs, d))
}

/// Two-oracle majority attack over the instances of the auxiliary sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct DelInsRec;

impl ReconstructionAttacker for DelInsRec {
    fn name(&self) -> String {
        "del_ins_rec".into()
    }

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let (xs, _) = aux_instances(ctx)?;
        let scalars = xs
            .iter()
            .map(|x| Ok(top_class(before, x)?.map_or(-1.0, |c| c as f64)))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Observation { scalars, instances: xs, ..Default::default() })
    }

    fn reconstruct(&self, _: &AttackContext, obs: Observation, after: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
        let d = obs.instances.first().map(|x| x.dim()).unwrap_or(0);
        let before: Vec<Option<usize>> = obs.scalars.iter().map(|&c| (c >= 0.0).then_some(c as usize)).collect();
        let (x, empty) = disagreement_majority(&obs.instances, &before, after, d)?;
        Ok(RecOutput { guess: RecGuess::Instance(x), degenerate: empty })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleOracleSide {
    Before,
    After,
}

/// Baseline that sees one model only: the majority over auxiliary points
/// that `side`'s model assigns the deleted example's label.
#[derive(Clone, Copy, Debug)]
pub struct SingleOracleMajority {
    pub side: SingleOracleSide,
}

impl SingleOracleMajority {
    fn matching(ctx: &AttackContext, oracle: &mut Oracle) -> Result<Instance> {
        let Some(Label::Class(y)) = ctx.known_label else {
            return Err(AuditError::InvalidArgument("single-oracle baseline needs the deleted class label".into()));
        };
        let (xs, d) = aux_instances(ctx)?;
        let mut hits = Vec::new();
        for x in &xs {
            if top_class(oracle, x)? == Some(y) {
                hits.push(binary(x)?);
            }
        }
        Ok(Instance::Binary(coordinate_majority(hits, d)))
    }
}

impl ReconstructionAttacker for SingleOracleMajority {
    fn name(&self) -> String {
        match self.side {
            SingleOracleSide::Before => "single_oracle_majority[before]".into(),
            SingleOracleSide::After => "single_oracle_majority[after]".into(),
        }
    }

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        match self.side {
            SingleOracleSide::Before => Ok(Observation { instances: vec![Self::matching(ctx, before)?], ..Default::default() }),
            SingleOracleSide::After => Ok(Observation::default()),
        }
    }

    fn reconstruct(&self, ctx: &AttackContext, obs: Observation, after: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
        let x = match self.side {
            SingleOracleSide::Before => obs.instances.into_iter().next().expect("observed before"),
            SingleOracleSide::After => Self::matching(ctx, after)?,
        };
        Ok(RecOutput::new(RecGuess::Instance(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Phase;
    use crate::types::Prediction;

    fn bv(bits: &[u8]) -> BitVector {
        BitVector::from_bits(bits).unwrap()
    }

    #[test]
    fn majority_of_three_columns() {
        let pts = [bv(&[1, 0, 1]), bv(&[1, 0, 0]), bv(&[1, 1, 1])];
        assert_eq!(coordinate_majority(&pts, 3), bv(&[1, 0, 1]));
    }

    #[test]
    fn even_split_goes_to_zero() {
        let pts = [bv(&[1, 0]), bv(&[0, 1])];
        assert_eq!(coordinate_majority(&pts, 2), bv(&[0, 0]));
    }

    #[test]
    fn identical_oracles_flag_empty_disagreement() {
        let aux: Vec<Instance> = (0..8).map(|v| Instance::Binary(BitVector::from_u64(v, 3))).collect();
        let f = |_: &Instance| Ok(Prediction::ClassDistribution(vec![1.0, 0.0]));
        let mut before = Oracle::from_fn(f, Phase::BeforeDeletion);
        let mut after = Oracle::from_fn(f, Phase::AfterDeletion);
        let (x, empty) = del_ins_rec(&mut before, &mut after, &aux).unwrap();
        assert!(empty);
        assert_eq!(x, Instance::Binary(BitVector::zeros(3)));
        assert_eq!((before.query_count(), after.query_count()), (8, 8));
    }

    #[test]
    fn recovers_the_changed_region() {
        // the after model relabels every point with first bit 1
        let aux: Vec<Instance> = (0..8).map(|v| Instance::Binary(BitVector::from_u64(v, 3))).collect();
        let mut before = Oracle::from_fn(|_| Ok(Prediction::ClassDistribution(vec![1.0, 0.0])), Phase::BeforeDeletion);
        let mut after = Oracle::from_fn(
            |x: &Instance| {
                let Instance::Binary(b) = x else { unreachable!() };
                Ok(Prediction::ClassDistribution(if b.get(0) && b.get(1) { vec![0.0, 1.0] } else { vec![1.0, 0.0] }))
            },
            Phase::AfterDeletion,
        );
        let (x, empty) = del_ins_rec(&mut before, &mut after, &aux).unwrap();
        assert!(!empty);
        assert_eq!(x, Instance::Binary(bv(&[1, 1, 0])));
    }
}
