//! The deletion-inference, deletion-reconstruction and known-instance games.
//!
//! Trials are independent and run on the rayon pool. Every random choice in
//! trial `t` comes from a stream keyed by `(seed, t, purpose)`, so results do
//! not depend on scheduling.

mod stats;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    AttackContext, Challenge, DistanceMetric, InferenceAttacker, InsRevLblRec, RecGuess, ReconstructionAttacker,
};
use crate::data::DatasetDistribution;
use crate::error::{AuditError, Result};
use crate::learners::{train, LearnerSpec, Model};
use crate::oracle::{Oracle, Phase};
use crate::rng::{derive_seed, distinct_pair, fair_coin, rng_for, GameRng};
use crate::types::{Dataset, Example, Instance, InstanceKind, Label, Prediction, Predictor};
use crate::unlearning::{delete_examples, deletion_seed, DeletionRequest};

pub use stats::{mean_and_se, multiset_f1, wilson_interval, RecStats, SuccessStats, Z95};

fn default_batch() -> usize {
    1
}

/// Which version of the inference game to play.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    /// Challenges reveal instances only.
    #[serde(default)]
    pub instance_only: bool,
    /// Challenges reveal labels only.
    #[serde(default)]
    pub label_only: bool,
    /// The non-deleted challenge is a fresh draw instead of a member of S.
    #[serde(default)]
    pub deletion_hiding: bool,
    /// Examples deleted per trial; above 1 every deleted example is paired
    /// with every one of as many retained references.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Oracles answer one-hot argmax distributions instead of confidences.
    #[serde(default)]
    pub hard_labels: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Variant {
            instance_only: false,
            label_only: false,
            deletion_hiding: false,
            batch_size: 1,
            hard_labels: false,
        }
    }
}

/// A fully resolved game.
#[derive(Clone, Debug)]
pub struct GameConfig {
    pub learner: LearnerSpec,
    pub data: DatasetDistribution,
    pub trials: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Fresh examples handed to the attacker in each trial.
    pub aux_size: usize,
    /// Distance used to score reconstructions. `None` picks one from the
    /// data kind.
    pub metric: Option<DistanceMetric>,
    /// Reconstruction radius.
    pub eps: f64,
    /// Reveal the deleted example's label to reconstruction attackers.
    pub reveal_label: bool,
}

impl GameConfig {
    pub fn new(learner: LearnerSpec, data: DatasetDistribution, trials: usize, seed: u64) -> Self {
        GameConfig {
            learner,
            data,
            trials,
            seed,
            variant: Variant::default(),
            aux_size: 0,
            metric: None,
            eps: 0.0,
            reveal_label: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        let v = &self.variant;
        if self.trials == 0 {
            return Err(AuditError::config("game.trials", "must be at least 1"));
        }
        if v.instance_only && v.label_only {
            return Err(AuditError::config("game.variant", "instance_only and label_only are exclusive"));
        }
        if v.batch_size == 0 {
            return Err(AuditError::config("game.variant.batch_size", "must be at least 1"));
        }
        let n = self.data.nominal_size();
        if 2 * v.batch_size > n {
            return Err(AuditError::config(
                "game.variant.batch_size",
                format!("needs {} distinct examples, datasets have {n}", 2 * v.batch_size),
            ));
        }
        if v.batch_size > 1 && v.deletion_hiding {
            return Err(AuditError::config("game.variant", "deletion_hiding is defined for single deletions"));
        }
        if !(self.eps >= 0.0) {
            return Err(AuditError::config("game.eps", "must be non-negative"));
        }
        Ok(())
    }

    /// Default metric for this data kind: Hamming for binary instances,
    /// 0-1 for class labels, absolute difference for reals and 1 − F1 for
    /// sentences.
    pub fn resolved_metric(&self, guess_kind: &RecGuess) -> DistanceMetric {
        if let Some(m) = self.metric {
            return m;
        }
        match guess_kind {
            RecGuess::Instance(Instance::Binary(_)) => DistanceMetric::Hamming,
            RecGuess::Instance(_) | RecGuess::Real(_) => DistanceMetric::AbsDiff,
            RecGuess::Class(_) => DistanceMetric::ZeroOneExact,
            RecGuess::Sequence(_) => DistanceMetric::NormalizedHamming,
            RecGuess::Example(_) => DistanceMetric::ZeroOneExact,
        }
    }

    fn context(&self, t: u64) -> Result<AttackContext> {
        let mut rng = rng_for(self.seed, t, "attacker-aux");
        let aux = (0..self.aux_size).map(|_| self.data.sample_example(&mut rng)).collect::<Result<Vec<_>>>()?;
        Ok(AttackContext {
            aux,
            known_instance: None,
            known_label: None,
            num_classes: self.data.num_classes(),
            vocab_size: self.data.dictionary().map(|d| d.len()),
        })
    }
}

/// Trial state shared by every attacker: the training set and both models.
pub struct TrialModels {
    pub dataset: Dataset,
    pub before: Model,
    pub after: Model,
}

/// Wraps a model as an oracle, optionally hiding confidences.
pub fn game_oracle(model: &Model, phase: Phase, hard_labels: bool) -> Oracle<'_> {
    if !hard_labels {
        return Oracle::new(model, phase);
    }
    Oracle::from_fn(
        move |x| {
            let p = model.predict(x)?;
            Ok(match (&p, p.argmax()) {
                (Prediction::ClassDistribution(d), Some(c)) => {
                    let mut one_hot = vec![0.0; d.len()];
                    one_hot[c] = 1.0;
                    Prediction::ClassDistribution(one_hot)
                }
                _ => p,
            })
        },
        phase,
    )
}

fn sample_and_train(cfg: &GameConfig, t: u64) -> Result<(Dataset, Model)> {
    let s = cfg.data.sample(&mut rng_for(cfg.seed, t, "data"))?;
    let h = train(&cfg.learner, &s, derive_seed(cfg.seed, t, "train"))?;
    Ok((s, h))
}

/// One scored guess of an inference game. Batch trials produce one record
/// per (deleted, reference) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub trial: u64,
    pub attacker: String,
    /// Index of the deleted challenge in S.
    pub deleted: usize,
    /// Index of the other challenge in S; `None` for a fresh draw.
    pub other: Option<usize>,
    pub b: u8,
    pub guess: u8,
    pub tie_broken: bool,
    pub win: bool,
    pub queries_before: u64,
    pub queries_after: u64,
    /// The fresh challenge also occurs in S (deletion-hiding only).
    pub collision: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceRun {
    pub attacker: String,
    pub stats: SuccessStats,
    pub records: Vec<InferenceRecord>,
}

fn challenge(variant: &Variant, e0: &Example, e1: &Example) -> Challenge {
    if variant.instance_only {
        Challenge::Instances(e0.instance.clone(), e1.instance.clone())
    } else if variant.label_only {
        Challenge::Labels(e0.label, e1.label)
    } else {
        Challenge::Examples(e0.clone(), e1.clone())
    }
}

#[allow(clippy::too_many_arguments)]
fn play_inference(
    cfg: &GameConfig,
    attacker: &dyn InferenceAttacker,
    ctx: &AttackContext,
    models: &TrialModels,
    t: u64,
    pair: u64,
    deleted: &Example,
    other: &Example,
    b: u8,
) -> Result<(u8, bool, u64, u64)> {
    let (e0, e1) = if b == 0 { (deleted, other) } else { (other, deleted) };
    let ch = challenge(&cfg.variant, e0, e1);
    let mut rng = rng_for(cfg.seed, t * 1_000_003 + pair, "attacker");
    let mut before = game_oracle(&models.before, Phase::BeforeDeletion, cfg.variant.hard_labels);
    let obs = attacker.observe(ctx, &ch, &mut before, &mut rng)?;
    before.revoke();
    let mut after = game_oracle(&models.after, Phase::AfterDeletion, cfg.variant.hard_labels);
    let g = attacker.decide(ctx, &ch, obs, &mut after, &mut rng)?;
    Ok((g.value, g.tie_broken, before.query_count(), after.query_count()))
}

fn inference_trial(cfg: &GameConfig, attackers: &[&dyn InferenceAttacker], t: u64) -> Result<Vec<Vec<InferenceRecord>>> {
    let (s, h) = sample_and_train(cfg, t)?;
    let ctx = cfg.context(t)?;
    let k = cfg.variant.batch_size;
    let mut coin = rng_for(cfg.seed, t, "coin");
    let mut pair_rng = rng_for(cfg.seed, t, "pair");
    // (deleted index, other index or fresh example)
    let mut pairs: Vec<(usize, Option<usize>, Option<Example>)> = Vec::new();
    let targets = if k == 1 {
        let (i, j) = distinct_pair(&mut pair_rng, s.len());
        if cfg.variant.deletion_hiding {
            let fresh = cfg.data.sample_example(&mut rng_for(cfg.seed, t, "hiding"))?;
            pairs.push((i, None, Some(fresh)));
        } else {
            pairs.push((i, Some(j), None));
        }
        vec![i]
    } else {
        let idx = sample_indices(&mut pair_rng, s.len(), 2 * k).into_vec();
        let (del, refs) = idx.split_at(k);
        for &d in del {
            for &r in refs {
                pairs.push((d, Some(r), None));
            }
        }
        del.to_vec()
    };
    let (_, h_del) = delete_examples(&cfg.learner, &s, &DeletionRequest::batch(targets)?, deletion_seed(cfg.seed, t))?;
    let models = TrialModels { dataset: s, before: h, after: h_del };
    let bits: Vec<u8> = pairs.iter().map(|_| fair_coin(&mut coin)).collect();

    let mut out = Vec::with_capacity(attackers.len());
    for a in attackers {
        let mut recs = Vec::with_capacity(pairs.len());
        for (p, ((d, o, fresh), &b)) in pairs.iter().zip(&bits).enumerate() {
            let deleted = &models.dataset.examples()[*d];
            let other = match (o, fresh) {
                (Some(j), _) => &models.dataset.examples()[*j],
                (None, Some(e)) => e,
                (None, None) => unreachable!("pair has a partner"),
            };
            let (guess, tie, qb, qa) = play_inference(cfg, *a, &ctx, &models, t, p as u64, deleted, other, b)?;
            recs.push(InferenceRecord {
                trial: t,
                attacker: a.name(),
                deleted: *d,
                other: *o,
                b,
                guess,
                tie_broken: tie,
                win: guess == b,
                queries_before: qb,
                queries_after: qa,
                collision: fresh.as_ref().is_some_and(|e| models.dataset.examples().contains(e)),
            });
        }
        out.push(recs);
    }
    Ok(out)
}

fn summarize(records: &[InferenceRecord]) -> SuccessStats {
    let wins = records.iter().filter(|r| r.win).count() as u64;
    let ties = records.iter().filter(|r| r.tie_broken).count() as u64;
    let qb = records.iter().map(|r| r.queries_before).sum();
    let qa = records.iter().map(|r| r.queries_after).sum();
    SuccessStats::from_counts(wins, records.len() as u64, ties, qb, qa)
}

/// Plays the deletion-inference game with several attackers on the same
/// trials (same datasets, challenges, bits and models).
pub fn run_deletion_inference_many(cfg: &GameConfig, attackers: &[&dyn InferenceAttacker]) -> Result<Vec<InferenceRun>> {
    cfg.validate()?;
    let per_trial = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| inference_trial(cfg, attackers, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(attackers
        .iter()
        .enumerate()
        .map(|(a, att)| {
            let records: Vec<InferenceRecord> = per_trial.iter().flat_map(|t| t[a].iter().cloned()).collect();
            InferenceRun { attacker: att.name(), stats: summarize(&records), records }
        })
        .collect())
}

pub fn run_deletion_inference(cfg: &GameConfig, attacker: &dyn InferenceAttacker) -> Result<InferenceRun> {
    Ok(run_deletion_inference_many(cfg, &[attacker])?.remove(0))
}

/// One scored reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecRecord {
    pub trial: u64,
    pub attacker: String,
    pub deleted: usize,
    pub distance: f64,
    /// Distance from the same guess to a random retained example, one with
    /// the deleted example's class when labels are classes.
    pub control_distance: Option<f64>,
    pub exact: bool,
    pub f1: Option<f64>,
    pub degenerate: bool,
    pub queries_before: u64,
    pub queries_after: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecRun {
    pub attacker: String,
    pub metric: DistanceMetric,
    pub stats: RecStats,
    /// The same summary for the control distances.
    pub control: Option<RecStats>,
    pub records: Vec<RecRecord>,
}

fn rec_trial(cfg: &GameConfig, attackers: &[&dyn ReconstructionAttacker], t: u64) -> Result<Vec<(RecRecord, DistanceMetric)>> {
    let (s, h) = sample_and_train(cfg, t)?;
    let mut pick = rng_for(cfg.seed, t, "pair");
    let i = pick.random_range(0..s.len());
    let truth = s.examples()[i].clone();
    let class_label = matches!(truth.label, Label::Class(_));
    let pool: Vec<usize> = (0..s.len())
        .filter(|&j| j != i && (!class_label || s.examples()[j].label == truth.label))
        .collect();
    let control = (!pool.is_empty()).then(|| s.examples()[pool[pick.random_range(0..pool.len())]].clone());
    let (_, h_del) = delete_examples(&cfg.learner, &s, &DeletionRequest::single(i), deletion_seed(cfg.seed, t))?;
    let mut ctx = cfg.context(t)?;
    if cfg.reveal_label {
        ctx.known_label = Some(truth.label);
    }
    let mut out = Vec::with_capacity(attackers.len());
    for a in attackers {
        let mut rng = rng_for(cfg.seed, t, "attacker");
        let mut before = game_oracle(&h, Phase::BeforeDeletion, cfg.variant.hard_labels);
        let obs = a.observe(&ctx, &mut before, &mut rng)?;
        before.revoke();
        let mut after = game_oracle(&h_del, Phase::AfterDeletion, cfg.variant.hard_labels);
        let rec = a.reconstruct(&ctx, obs, &mut after, &mut rng)?;
        let metric = cfg.resolved_metric(&rec.guess);
        let f1 = match (&rec.guess, &truth.instance) {
            (RecGuess::Sequence(g), Instance::Sentence(s)) => Some(multiset_f1(g, s)),
            _ => None,
        };
        out.push((
            RecRecord {
                trial: t,
                attacker: a.name(),
                deleted: i,
                distance: metric.guess(&rec.guess, &truth)?,
                control_distance: control.as_ref().map(|c| metric.guess(&rec.guess, c)).transpose()?,
                exact: DistanceMetric::ZeroOneExact.guess(&rec.guess, &truth)? == 0.0,
                f1,
                degenerate: rec.degenerate,
                queries_before: before.query_count(),
                queries_after: after.query_count(),
            },
            metric,
        ));
    }
    Ok(out)
}

/// Plays the reconstruction game with several attackers on shared trials.
pub fn run_reconstruction_many(cfg: &GameConfig, attackers: &[&dyn ReconstructionAttacker]) -> Result<Vec<RecRun>> {
    cfg.validate()?;
    let per_trial = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| rec_trial(cfg, attackers, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(attackers
        .iter()
        .enumerate()
        .map(|(a, att)| {
            let metric = per_trial[0][a].1;
            let records: Vec<RecRecord> = per_trial.iter().map(|t| t[a].0.clone()).collect();
            let d: Vec<f64> = records.iter().map(|r| r.distance).collect();
            let exact: Vec<bool> = records.iter().map(|r| r.exact).collect();
            let f1: Vec<f64> = records.iter().filter_map(|r| r.f1).collect();
            let degenerate = records.iter().filter(|r| r.degenerate).count() as u64;
            let c: Vec<f64> = records.iter().filter_map(|r| r.control_distance).collect();
            RecRun {
                attacker: att.name(),
                metric,
                stats: RecStats::new(cfg.eps, metric.bounded(), d, &exact, &f1, degenerate),
                control: (!c.is_empty()).then(|| RecStats::new(cfg.eps, metric.bounded(), c, &[], &[], 0)),
                records,
            }
        })
        .collect())
}

pub fn run_reconstruction(cfg: &GameConfig, attacker: &dyn ReconstructionAttacker) -> Result<RecRun> {
    Ok(run_reconstruction_many(cfg, &[attacker])?.remove(0))
}

/// One trial of the known-instance label game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownInstanceRecord {
    pub trial: u64,
    pub deleted: usize,
    pub label: f64,
    pub guess: f64,
    pub attacker_distance: f64,
    /// `min(|h(x) − y|, |h_del(x) − y|)`.
    pub baseline_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownInstanceRun {
    pub lambda: f64,
    pub mean_attacker: f64,
    pub mean_baseline: f64,
    pub se_attacker: f64,
    pub se_baseline: f64,
    pub records: Vec<KnownInstanceRecord>,
}

/// Plays the known-instance game with extrapolation factor `lambda`.
pub fn run_known_instance(cfg: &GameConfig, lambda: f64) -> Result<KnownInstanceRun> {
    cfg.validate()?;
    if !(lambda >= 0.0) {
        return Err(AuditError::config("attacker.lambda", "must be non-negative"));
    }
    let attacker = InsRevLblRec { lambda };
    let records = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<KnownInstanceRecord> {
            let (s, h) = sample_and_train(cfg, t)?;
            let i = rng_for(cfg.seed, t, "pair").random_range(0..s.len());
            let e = s.examples()[i].clone();
            let Label::Real(y) = e.label else {
                return Err(AuditError::config("data", "the known-instance game needs real labels"));
            };
            let (_, h_del) =
                delete_examples(&cfg.learner, &s, &DeletionRequest::single(i), deletion_seed(cfg.seed, t))?;
            let mut ctx = cfg.context(t)?;
            ctx.known_instance = Some(e.instance.clone());
            let mut rng: GameRng = rng_for(cfg.seed, t, "attacker");
            let mut before = Oracle::new(&h, Phase::BeforeDeletion);
            let obs = attacker.observe(&ctx, &mut before, &mut rng)?;
            before.revoke();
            let mut after = Oracle::new(&h_del, Phase::AfterDeletion);
            let RecGuess::Real(guess) = attacker.reconstruct(&ctx, obs, &mut after, &mut rng)?.guess else {
                unreachable!("extrapolation yields a real");
            };
            let scalar = |m: &Model| -> Result<f64> {
                m.predict(&e.instance)?.scalar().ok_or_else(|| AuditError::kind_mismatch("real prediction", "other"))
            };
            Ok(KnownInstanceRecord {
                trial: t,
                deleted: i,
                label: y,
                guess,
                attacker_distance: (guess - y).abs(),
                baseline_distance: (scalar(&h)? - y).abs().min((scalar(&h_del)? - y).abs()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_attacker, se_attacker) = mean_and_se(&records.iter().map(|r| r.attacker_distance).collect::<Vec<_>>());
    let (mean_baseline, se_baseline) = mean_and_se(&records.iter().map(|r| r.baseline_distance).collect::<Vec<_>>());
    Ok(KnownInstanceRun { lambda, mean_attacker, mean_baseline, se_attacker, se_baseline, records })
}

/// Requires the data to produce instances of `kind`.
pub fn require_instance_kind(cfg: &GameConfig, kind: InstanceKind) -> Result<()> {
    let s = cfg.data.sample(&mut rng_for(cfg.seed, 0, "data"))?;
    if s.instance_kind() != kind {
        return Err(AuditError::config("data", format!("expected {kind} instances, got {}", s.instance_kind())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AlwaysZero, DelInfExm};
    use crate::data::DataSpec;
    use crate::types::LossKind;

    fn blobs(n: usize) -> DatasetDistribution {
        DatasetDistribution::new(DataSpec::GaussianBlobs { n, d: 4, classes: 3, spread: 0.3 }, 5).unwrap()
    }

    #[test]
    fn always_zero_is_a_coin() {
        let cfg = GameConfig::new(LearnerSpec::Constant, blobs(20), 2000, 11);
        let run = run_deletion_inference(&cfg, &AlwaysZero).unwrap();
        assert!(run.stats.ci_low <= 0.5 && 0.5 <= run.stats.ci_high, "{:?}", run.stats);
    }

    #[test]
    fn replay_is_identical() {
        let cfg = GameConfig::new(LearnerSpec::DecisionTree, blobs(30), 40, 3);
        let a = run_deletion_inference(&cfg, &DelInfExm { loss: LossKind::ZeroOne }).unwrap();
        let b = run_deletion_inference(&cfg, &DelInfExm { loss: LossKind::ZeroOne }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exclusive_variants_are_rejected() {
        let mut cfg = GameConfig::new(LearnerSpec::DecisionTree, blobs(30), 4, 3);
        cfg.variant.instance_only = true;
        cfg.variant.label_only = true;
        assert!(matches!(cfg.validate(), Err(AuditError::ConfigInvalid { .. })));
        cfg.variant.label_only = false;
        cfg.variant.batch_size = 16;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn batch_scores_every_pair() {
        let mut cfg = GameConfig::new(LearnerSpec::DecisionTree, blobs(30), 3, 3);
        cfg.variant.batch_size = 3;
        let run = run_deletion_inference(&cfg, &DelInfExm { loss: LossKind::ZeroOne }).unwrap();
        assert_eq!(run.records.len(), 27);
        assert_eq!(run.stats.mean_queries_before, 2.0);
    }

    #[test]
    fn hard_labels_are_one_hot() {
        let ds = blobs(30).sample(&mut rng_for(0, 0, "x")).unwrap();
        let h = train(&LearnerSpec::logistic_default(), &ds, 0).unwrap();
        let mut o = game_oracle(&h, Phase::BeforeDeletion, true);
        let Prediction::ClassDistribution(p) = o.query(&ds.examples()[0].instance).unwrap() else { panic!() };
        assert_eq!(p.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn zero_lambda_reproduces_the_before_distance() {
        let data = DatasetDistribution::new(DataSpec::LinearRegression { n: 30, d: 3, noise_sigma: 0.5 }, 2).unwrap();
        let cfg = GameConfig::new(LearnerSpec::Ols, data, 20, 4);
        let run = run_known_instance(&cfg, 0.0).unwrap();
        for r in &run.records {
            let (s, h) = sample_and_train(&cfg, r.trial).unwrap();
            let y_hat = h.predict(&s.examples()[r.deleted].instance).unwrap().scalar().unwrap();
            assert_eq!(r.attacker_distance, (y_hat - r.label).abs());
        }
    }
}
