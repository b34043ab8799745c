use super::label_rec::{class_mass_change, sample_probes};
use super::{AttackContext, Challenge, DistanceMetric, GuessBit, InferenceAttacker, Observation};
use crate::error::{AuditError, Result};
use crate::oracle::Oracle;
use crate::rng::GameRng;
use crate::types::{evaluate_loss, Example, Instance, LossKind, Prediction};

/// Loss-increase attack on full examples.
///
/// `α = δ(e0) − δ(e1)` with `δ(e) = ℓ(h_del, e) − ℓ(h, e)`; the example
/// whose loss went up more is guessed deleted.
pub fn del_inf_exm(
    e0: &Example,
    e1: &Example,
    before: &mut Oracle,
    after: &mut Oracle,
    kind: LossKind,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    let a = DelInfExm { loss: kind };
    super::run_inference(&a, &AttackContext::default(), &Challenge::Examples(e0.clone(), e1.clone()), before, after, rng)
}

/// Prediction-change attack on bare instances.
///
/// `β = dis(h(x0), h_del(x0)) − dis(h(x1), h_del(x1))`.
pub fn del_inf_ins(
    x0: &Instance,
    x1: &Instance,
    before: &mut Oracle,
    after: &mut Oracle,
    dis: DistanceMetric,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    let a = DelInfIns { metric: Some(dis) };
    super::run_inference(&a, &AttackContext::default(), &Challenge::Instances(x0.clone(), x1.clone()), before, after, rng)
}

#[derive(Clone, Debug)]
pub struct DelInfExm {
    pub loss: LossKind,
}

impl InferenceAttacker for DelInfExm {
    fn name(&self) -> String {
        format!("del_inf_exm[{}]", self.loss.name())
    }

    fn observe(&self, _: &AttackContext, ch: &Challenge, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let (e0, e1) = ch.examples().ok_or_else(|| AuditError::kind_mismatch("example challenge", ch.kind()))?;
        let p0 = before.query(&e0.instance)?;
        let p1 = before.query(&e1.instance)?;
        Ok(Observation {
            scalars: vec![evaluate_loss(self.loss, &p0, &e0.label)?, evaluate_loss(self.loss, &p1, &e1.label)?],
            ..Default::default()
        })
    }

    fn decide(
        &self,
        _: &AttackContext,
        ch: &Challenge,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<GuessBit> {
        let (e0, e1) = ch.examples().ok_or_else(|| AuditError::kind_mismatch("example challenge", ch.kind()))?;
        let q0 = after.query(&e0.instance)?;
        let q1 = after.query(&e1.instance)?;
        let d0 = evaluate_loss(self.loss, &q0, &e0.label)? - obs.scalars[0];
        let d1 = evaluate_loss(self.loss, &q1, &e1.label)? - obs.scalars[1];
        Ok(GuessBit::from_sign(d0 - d1, rng))
    }
}

/// `metric: None` picks absolute difference for real predictions and L1 on
/// confidences for class distributions.
#[derive(Clone, Debug, Default)]
pub struct DelInfIns {
    pub metric: Option<DistanceMetric>,
}

impl DelInfIns {
    fn metric_for(&self, p: &Prediction) -> DistanceMetric {
        self.metric.unwrap_or(match p {
            Prediction::ClassDistribution(_) => DistanceMetric::L1Confidence,
            _ => DistanceMetric::AbsDiff,
        })
    }
}

impl InferenceAttacker for DelInfIns {
    fn name(&self) -> String {
        match self.metric {
            Some(m) => format!("del_inf_ins[{}]", m.name()),
            None => "del_inf_ins".into(),
        }
    }

    fn observe(&self, _: &AttackContext, ch: &Challenge, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let (x0, x1) = ch.instances().ok_or_else(|| AuditError::kind_mismatch("instance challenge", ch.kind()))?;
        Ok(Observation { predictions: vec![before.query(x0)?, before.query(x1)?], ..Default::default() })
    }

    fn decide(
        &self,
        _: &AttackContext,
        ch: &Challenge,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<GuessBit> {
        let (x0, x1) = ch.instances().ok_or_else(|| AuditError::kind_mismatch("instance challenge", ch.kind()))?;
        let q0 = after.query(x0)?;
        let q1 = after.query(x1)?;
        let m = self.metric_for(&q0);
        let beta = m.predictions(&obs.predictions[0], &q0)? - m.predictions(&obs.predictions[1], &q1)?;
        Ok(GuessBit::from_sign(beta, rng))
    }
}

/// Always answers 0 without querying anything.
#[derive(Clone, Copy, Debug, Default)]
pub struct AlwaysZero;

impl InferenceAttacker for AlwaysZero {
    fn name(&self) -> String {
        "always_zero".into()
    }

    fn observe(&self, _: &AttackContext, _: &Challenge, _: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        Ok(Observation::default())
    }

    fn decide(
        &self,
        _: &AttackContext,
        _: &Challenge,
        _: Observation,
        _: &mut Oracle,
        _: &mut GameRng,
    ) -> Result<GuessBit> {
        Ok(GuessBit::decided(0))
    }
}

/// Label-only inference: probes the feature box of the auxiliary data and
/// guesses that the deleted example carries the label whose confidence
/// mass dropped more.
#[derive(Clone, Debug)]
pub struct LabelMassDi {
    pub probes: usize,
}

impl InferenceAttacker for LabelMassDi {
    fn name(&self) -> String {
        format!("label_mass_di[probes={}]", self.probes)
    }

    fn observe(&self, ctx: &AttackContext, ch: &Challenge, before: &mut Oracle, rng: &mut GameRng) -> Result<Observation> {
        ch.labels().ok_or_else(|| AuditError::kind_mismatch("label challenge", ch.kind()))?;
        let probes = sample_probes(&ctx.aux, self.probes, rng)?;
        let predictions = probes.iter().map(|x| before.query(x)).collect::<Result<Vec<_>>>()?;
        Ok(Observation { predictions, instances: probes, ..Default::default() })
    }

    fn decide(
        &self,
        _: &AttackContext,
        ch: &Challenge,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<GuessBit> {
        let (y0, y1) = ch.labels().ok_or_else(|| AuditError::kind_mismatch("label challenge", ch.kind()))?;
        let (crate::types::Label::Class(c0), crate::types::Label::Class(c1)) = (y0, y1) else {
            return Err(AuditError::kind_mismatch("class labels", y0.name()));
        };
        let change = class_mass_change(&obs.predictions, &obs.instances, after)?;
        let get = |c: usize| change.get(c).copied().unwrap_or(0.0);
        Ok(GuessBit::from_sign(get(*c1) - get(*c0), rng))
    }
}
