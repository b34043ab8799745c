//! Adversaries for the deletion-inference and deletion-reconstruction games.
//!
//! Every attacker works in two phases. `observe` runs while only the
//! before-deletion oracle exists; whatever it learned is carried in an
//! [`Observation`] into the second phase, which sees only the
//! after-deletion oracle. The free functions (`del_inf_exm`, ...) run both
//! phases back to back for callers that hold both oracles.

mod distance;
mod inference;
mod instance_rec;
mod label_rec;
mod membership;
mod ngram_rec;
mod reduction;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::Oracle;
use crate::rng::{fair_coin, GameRng};
use crate::types::{Example, Instance, Label, Prediction};

pub use distance::DistanceMetric;
pub use inference::{del_inf_exm, del_inf_ins, AlwaysZero, DelInfExm, DelInfIns, LabelMassDi};
pub use instance_rec::{coordinate_majority, del_ins_rec, DelInsRec, SingleOracleMajority, SingleOracleSide};
pub use label_rec::{del_lbl_rec, ins_rev_lbl_rec, probe_box, tune_lambda, DelLblRec, InsRevLblRec};
pub use membership::{mi_threshold, mi_to_di, LossThresholdMi, MembershipProcedure, MiMode, MiReduction, TauPolicy};
pub use ngram_rec::{
    ngram_diff, ngram_path_search, DecreaseRule, DiffGraph, DiffNode, NGramDiffOptions, NGramRec, PathSearchError,
    PruneMode,
};
pub use reduction::{rec_to_inf, RecToInf};

/// The attacker's answer in a deletion-inference game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessBit {
    pub value: u8,
    /// Set when the decision statistic was exactly zero and a coin decided.
    pub tie_broken: bool,
}

impl GuessBit {
    pub fn decided(value: u8) -> Self {
        GuessBit { value, tie_broken: false }
    }

    pub fn coin(rng: &mut GameRng) -> Self {
        GuessBit { value: fair_coin(rng), tie_broken: true }
    }

    /// 0 for a positive statistic, 1 for a negative one, a coin for 0.
    pub fn from_sign(stat: f64, rng: &mut GameRng) -> Self {
        if stat > 0.0 {
            GuessBit::decided(0)
        } else if stat < 0.0 {
            GuessBit::decided(1)
        } else {
            GuessBit::coin(rng)
        }
    }
}

/// What the attacker is told about the two candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Challenge {
    Examples(Example, Example),
    Instances(Instance, Instance),
    Labels(Label, Label),
}

impl Challenge {
    pub fn examples(&self) -> Option<(&Example, &Example)> {
        match self {
            Challenge::Examples(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn instances(&self) -> Option<(&Instance, &Instance)> {
        match self {
            Challenge::Examples(a, b) => Some((&a.instance, &b.instance)),
            Challenge::Instances(a, b) => Some((a, b)),
            Challenge::Labels(..) => None,
        }
    }

    pub fn labels(&self) -> Option<(&Label, &Label)> {
        match self {
            Challenge::Examples(a, b) => Some((&a.label, &b.label)),
            Challenge::Labels(a, b) => Some((a, b)),
            Challenge::Instances(..) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Challenge::Examples(..) => "examples",
            Challenge::Instances(..) => "instances",
            Challenge::Labels(..) => "labels",
        }
    }
}

/// Side information the game hands to the attacker.
#[derive(Clone, Debug, Default)]
pub struct AttackContext {
    /// Fresh examples drawn by the attacker from the data distribution,
    /// independent of the training set.
    pub aux: Vec<Example>,
    /// The deleted instance, in the known-instance game.
    pub known_instance: Option<Instance>,
    /// The deleted example's label, revealed only to single-oracle baselines.
    pub known_label: Option<Label>,
    /// Size of the label space, when labels are classes.
    pub num_classes: Option<usize>,
    /// Size of the token dictionary (ids `0..vocab_size`), for sequence data.
    pub vocab_size: Option<usize>,
}

/// State carried from the before-deletion phase to the after-deletion phase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation {
    pub predictions: Vec<Prediction>,
    pub scalars: Vec<f64>,
    pub sequences: Vec<Vec<u32>>,
    pub instances: Vec<Instance>,
}

/// A deletion-inference adversary.
pub trait InferenceAttacker: Send + Sync {
    fn name(&self) -> String;

    fn observe(
        &self,
        ctx: &AttackContext,
        challenge: &Challenge,
        before: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<Observation>;

    fn decide(
        &self,
        ctx: &AttackContext,
        challenge: &Challenge,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<GuessBit>;
}

/// A reconstruction guess, shaped by what the attack recovers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecGuess {
    Instance(Instance),
    Class(usize),
    Real(f64),
    Sequence(Vec<u32>),
    Example(Example),
}

/// A guess plus whether the attack fell back to a default answer.
#[derive(Clone, Debug, PartialEq)]
pub struct RecOutput {
    pub guess: RecGuess,
    pub degenerate: bool,
}

impl RecOutput {
    pub fn new(guess: RecGuess) -> Self {
        RecOutput { guess, degenerate: false }
    }
}

/// A deletion-reconstruction adversary.
pub trait ReconstructionAttacker: Send + Sync {
    fn name(&self) -> String;

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, rng: &mut GameRng) -> Result<Observation>;

    fn reconstruct(
        &self,
        ctx: &AttackContext,
        obs: Observation,
        after: &mut Oracle,
        rng: &mut GameRng,
    ) -> Result<RecOutput>;
}

/// Runs both phases of an inference attacker, revoking `before` in between.
pub fn run_inference(
    attacker: &dyn InferenceAttacker,
    ctx: &AttackContext,
    challenge: &Challenge,
    before: &mut Oracle,
    after: &mut Oracle,
    rng: &mut GameRng,
) -> Result<GuessBit> {
    let obs = attacker.observe(ctx, challenge, before, rng)?;
    before.revoke();
    attacker.decide(ctx, challenge, obs, after, rng)
}

/// Runs both phases of a reconstruction attacker, revoking `before` in
/// between.
pub fn run_reconstruction_attack(
    attacker: &dyn ReconstructionAttacker,
    ctx: &AttackContext,
    before: &mut Oracle,
    after: &mut Oracle,
    rng: &mut GameRng,
) -> Result<RecOutput> {
    let obs = attacker.observe(ctx, before, rng)?;
    before.revoke();
    attacker.reconstruct(ctx, obs, after, rng)
}
