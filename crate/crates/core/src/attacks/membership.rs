use serde::{Deserialize, Serialize};

use super::{AttackContext, Challenge, GuessBit, InferenceAttacker, Observation};
use crate::error::{AuditError, Result};
use crate::oracle::Oracle;
use crate::rng::GameRng;
use crate::types::{evaluate_loss, Example, LossKind};

/// A membership-inference procedure with a bit and a real-valued
/// confidence (larger means "more likely a member").
pub trait MembershipProcedure {
    fn member(&self, e: &Example, oracle: &mut Oracle) -> Result<bool>;
    fn confidence(&self, e: &Example, oracle: &mut Oracle) -> Result<f64>;
}

/// Member iff the loss is at most `tau`; confidence is `tau − loss`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossThresholdMi {
    pub loss: LossKind,
    pub tau: f64,
}

impl MembershipProcedure for LossThresholdMi {
    fn member(&self, e: &Example, oracle: &mut Oracle) -> Result<bool> {
        Ok(mi_threshold(e, oracle, self.tau, self.loss)? == 1)
    }

    fn confidence(&self, e: &Example, oracle: &mut Oracle) -> Result<f64> {
        Ok(self.tau - evaluate_loss(self.loss, &oracle.query(&e.instance)?, &e.label)?)
    }
}

/// 1 (member) iff the loss of `e` under the oracle is at most `tau`.
pub fn mi_threshold(e: &Example, oracle: &mut Oracle, tau: f64, kind: LossKind) -> Result<u8> {
    let p = oracle.query(&e.instance)?;
    Ok((evaluate_loss(kind, &p, &e.label)? <= tau) as u8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiMode {
    /// Membership bits on the after-deletion model only.
    Label,
    /// Confidence drop across the deletion.
    Confidence,
}

/// Deletion inference from membership inference.
///
/// Label mode: with `b_k = mi(e_k, h_del)`, `(0,1)` means e0 left the model
/// and gives 0, `(1,0)` gives 1, anything else a coin. Confidence mode
/// guesses 0 iff e0's membership confidence dropped more than e1's.
pub fn mi_to_di(
    mi: &dyn MembershipProcedure,
    e0: &Example,
    e1: &Example,
    before: &mut Oracle,
    after: &mut Oracle,
    mode: MiMode,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    let mut pre = (0.0, 0.0);
    if mode == MiMode::Confidence {
        pre = (mi.confidence(e0, before)?, mi.confidence(e1, before)?);
    }
    before.revoke();
    decide(mi, e0, e1, pre, after, mode, rng)
}

fn decide(
    mi: &dyn MembershipProcedure,
    e0: &Example,
    e1: &Example,
    pre: (f64, f64),
    after: &mut Oracle,
    mode: MiMode,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    match mode {
        MiMode::Label => match (mi.member(e0, after)?, mi.member(e1, after)?) {
            (false, true) => Ok(GuessBit::decided(0)),
            (true, false) => Ok(GuessBit::decided(1)),
            _ => Ok(GuessBit::coin(rng)),
        },
        MiMode::Confidence => {
            let d0 = mi.confidence(e0, after)? - pre.0;
            let d1 = mi.confidence(e1, after)? - pre.1;
            Ok(GuessBit::from_sign(d1 - d0, rng))
        }
    }
}

/// How the loss threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    Fixed(f64),
    /// Median loss of the attacker's auxiliary examples under the
    /// before-deletion model.
    HoldoutMedian,
}

/// The membership-inference reduction as a game attacker, backed by a loss
/// threshold.
#[derive(Clone, Debug)]
pub struct MiReduction {
    pub loss: LossKind,
    pub tau: TauPolicy,
    pub mode: MiMode,
}

impl MiReduction {
    fn calibrate(&self, ctx: &AttackContext, before: &mut Oracle) -> Result<f64> {
        match self.tau {
            TauPolicy::Fixed(t) => Ok(t),
            TauPolicy::HoldoutMedian => {
                if ctx.aux.is_empty() {
                    return Err(AuditError::config("attacker.aux_size", "median calibration needs auxiliary data"));
                }
                let mut losses = ctx
                    .aux
                    .iter()
                    .map(|e| evaluate_loss(self.loss, &before.query(&e.instance)?, &e.label))
                    .collect::<Result<Vec<f64>>>()?;
                losses.sort_by(f64::total_cmp);
                let m = losses.len();
                Ok(if m % 2 == 1 { losses[m / 2] } else { 0.5 * (losses[m / 2 - 1] + losses[m / 2]) })
            }
        }
    }
}

impl InferenceAttacker for MiReduction {
    fn name(&self) -> String {
        let mode = match self.mode {
            MiMode::Label => "label",
            MiMode::Confidence => "confidence",
        };
        format!("mi_to_di[{mode},{}]", self.loss.name())
    }

    fn observe(&self, ctx: &AttackContext, ch: &Challenge, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let (e0, e1) = ch.examples().ok_or_else(|| AuditError::kind_mismatch("example challenge", ch.kind()))?;
        let tau = self.calibrate(ctx, before)?;
        let mi = LossThresholdMi { loss: self.loss, tau };
        let mut scalars = vec![tau];
        if self.mode == MiMode::Confidence {
            scalars.push(mi.confidence(e0, before)?);
            scalars.push(mi.confidence(e1, before)?);
        }
        Ok(Observation { scalars, ..Default::default() })
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
        let mi = LossThresholdMi { loss: self.loss, tau: obs.scalars[0] };
        let pre = match self.mode {
            MiMode::Confidence => (obs.scalars[1], obs.scalars[2]),
            MiMode::Label => (0.0, 0.0),
        };
        decide(&mi, e0, e1, pre, after, self.mode, rng)
    }
}
