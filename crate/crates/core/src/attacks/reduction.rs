use super::{
    run_reconstruction_attack, AttackContext, Challenge, DistanceMetric, GuessBit, InferenceAttacker, Observation,
    RecGuess, ReconstructionAttacker,
};
use crate::error::{AuditError, Result};
use crate::oracle::Oracle;
use crate::rng::GameRng;
use crate::types::Example;

/// Deletion inference from a reconstruction: 0 if the guess lies within
/// `eps` of `e0`, else 1 if within `eps` of `e1`, else a coin.
#[allow(clippy::too_many_arguments)]
pub fn rec_to_inf(
    rec: &dyn ReconstructionAttacker,
    ctx: &AttackContext,
    dis: DistanceMetric,
    eps: f64,
    e0: &Example,
    e1: &Example,
    before: &mut Oracle,
    after: &mut Oracle,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    let out = run_reconstruction_attack(rec, ctx, before, after, rng)?;
    decide(&out.guess, dis, eps, e0, e1, rng)
}

fn decide(guess: &RecGuess, dis: DistanceMetric, eps: f64, e0: &Example, e1: &Example, rng: &mut GameRng) -> Result<GuessBit> {
    if dis.guess(guess, e0)? <= eps {
        Ok(GuessBit::decided(0))
    } else if dis.guess(guess, e1)? <= eps {
        Ok(GuessBit::decided(1))
    } else {
        Ok(GuessBit::coin(rng))
    }
}

/// A reconstruction attacker driven through the inference game.
pub struct RecToInf {
    pub rec: Box<dyn ReconstructionAttacker>,
    pub metric: DistanceMetric,
    pub eps: f64,
}

impl InferenceAttacker for RecToInf {
    fn name(&self) -> String {
        format!("rec_to_inf[{},{},eps={}]", self.rec.name(), self.metric.name(), self.eps)
    }

    fn observe(&self, ctx: &AttackContext, _: &Challenge, before: &mut Oracle, rng: &mut GameRng) -> Result<Observation> {
        self.rec.observe(ctx, before, rng)
    }

    fn decide(
        &self,
        ctx: &AttackContext,
        ch: &Challenge,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<GuessBit> {
        let (e0, e1) = ch.examples().ok_or_else(|| AuditError::kind_mismatch("example challenge", ch.kind()))?;
        let out = self.rec.reconstruct(ctx, obs, after, rng)?;
        decide(&out.guess, self.metric, self.eps, e0, e1, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::RecOutput;
    use crate::oracle::Phase;
    use crate::rng::rng_for;
    use crate::types::{Instance, Label, Prediction};

    struct Fixed(Example);

    impl ReconstructionAttacker for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn observe(&self, _: &AttackContext, _: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
            Ok(Observation::default())
        }
        fn reconstruct(&self, _: &AttackContext, _: Observation, _: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
            Ok(RecOutput::new(RecGuess::Example(self.0.clone())))
        }
    }

    fn ex(v: f64) -> Example {
        Example::new(Instance::Dense(vec![v]), Label::Real(v))
    }

    fn run(guess: f64, rng: &mut GameRng) -> GuessBit {
        let f = |_: &Instance| Ok(Prediction::RealValue(0.0));
        let mut b = Oracle::from_fn(f, Phase::BeforeDeletion);
        let mut a = Oracle::from_fn(f, Phase::AfterDeletion);
        let ctx = AttackContext::default();
        rec_to_inf(&Fixed(ex(guess)), &ctx, DistanceMetric::ZeroOneExact, 0.0, &ex(0.0), &ex(1.0), &mut b, &mut a, rng)
            .unwrap()
    }

    #[test]
    fn decision_rule() {
        let mut rng = rng_for(3, 0, "t");
        assert_eq!(run(0.0, &mut rng), GuessBit::decided(0));
        assert_eq!(run(1.0, &mut rng), GuessBit::decided(1));
        assert!(run(7.0, &mut rng).tie_broken);
    }
}
