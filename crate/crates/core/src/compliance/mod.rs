//! Weak deletion compliance: a data collector that trains on what it is
//! sent, an honest requester that stores two records and deletes one, and
//! an environment that tries to tell which.

mod protocol;

pub use protocol::{
    decode_message, decode_response, encode_message, encode_response, serve, RemoteDatCol, PROTOCOL_VERSION,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{AttackContext, Challenge, InferenceAttacker};
use crate::data::DatasetDistribution;
use crate::error::{AuditError, Result};
use crate::games::{wilson_interval, Z95};
use crate::learners::{predict, train, LearnerSpec, Model};
use crate::oracle::{Oracle, Phase};
use crate::rng::{derive_seed, distinct_pair, rng_for, GameRng};
use crate::types::{Dataset, Example, Instance, Label, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatColPhase {
    Collecting,
    Serving,
    PostDeletion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMessage {
    Add(Example),
    Del(Example),
    Eval(Instance),
}

impl ProtocolMessage {
    pub fn verb(&self) -> &'static str {
        match self {
            ProtocolMessage::Add(_) => "ADD",
            ProtocolMessage::Del(_) => "DEL",
            ProtocolMessage::Eval(_) => "EVAL",
        }
    }
}

/// Why a message was turned away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalReason {
    /// Del or Eval before the collector holds `n` examples.
    StillCollecting,
    /// Add after the collector stopped collecting.
    CollectionClosed,
    BudgetExhausted,
}

impl RefusalReason {
    pub fn code(self) -> &'static str {
        match self {
            RefusalReason::StillCollecting => "still_collecting",
            RefusalReason::CollectionClosed => "collection_closed",
            RefusalReason::BudgetExhausted => "budget_exhausted",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [RefusalReason::StillCollecting, RefusalReason::CollectionClosed, RefusalReason::BudgetExhausted]
            .into_iter()
            .find(|r| r.code() == code)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Ack,
    Refused(RefusalReason),
    Prediction(Prediction),
}

/// The collector's full state. Transitions only go forward:
/// Collecting, then Serving, then PostDeletion.
#[derive(Clone, Debug, PartialEq)]
pub struct DatColState {
    pub phase: DatColPhase,
    pub stored: Vec<Example>,
    pub model: Option<Model>,
    pub capacity: usize,
    pub budget: usize,
    pub deletions_used: usize,
    /// Fixed when the first model is trained so every later model emits
    /// distributions of the same width.
    pub num_classes: Option<usize>,
    trainings: u64,
}

impl DatColState {
    pub fn new(capacity: usize, budget: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(AuditError::config("compliance.n", "must be at least 2"));
        }
        if budget == 0 {
            return Err(AuditError::config("compliance.k", "must be at least 1"));
        }
        Ok(DatColState {
            phase: DatColPhase::Collecting,
            stored: Vec::with_capacity(capacity),
            model: None,
            capacity,
            budget,
            deletions_used: 0,
            num_classes: None,
            trainings: 0,
        })
    }

    /// Seeds of the `t`-th training: one for the shuffle, one for the learner.
    pub fn training_seeds(seed: u64, t: u64) -> (u64, u64) {
        (derive_seed(seed, t, "datcol-permute"), derive_seed(seed, t, "datcol-train"))
    }

    fn retrain(&mut self, spec: &LearnerSpec, seed: u64) -> Result<()> {
        let (perm_seed, train_seed) = Self::training_seeds(seed, self.trainings);
        self.trainings += 1;
        let mut order = self.stored.clone();
        order.shuffle(&mut GameRng::seed_from_u64(perm_seed));
        let mut ds = Dataset::new(order, "datcol")?;
        match self.num_classes {
            Some(c) => ds = ds.with_num_classes(c)?,
            None => self.num_classes = ds.num_classes(),
        }
        self.model = Some(train(spec, &ds, train_seed)?);
        Ok(())
    }

    /// Applies one message. Protocol violations become `Refused`; only
    /// training failures surface as errors.
    pub fn handle(&mut self, msg: &ProtocolMessage, spec: &LearnerSpec, seed: u64) -> Result<Response> {
        match (msg, self.phase) {
            (ProtocolMessage::Add(e), DatColPhase::Collecting) => {
                self.stored.push(e.clone());
                if self.stored.len() == self.capacity {
                    self.retrain(spec, seed)?;
                    self.phase = DatColPhase::Serving;
                }
                Ok(Response::Ack)
            }
            (ProtocolMessage::Add(_), _) => Ok(Response::Refused(RefusalReason::CollectionClosed)),
            (_, DatColPhase::Collecting) => Ok(Response::Refused(RefusalReason::StillCollecting)),
            (ProtocolMessage::Eval(x), _) => {
                let model = self.model.as_ref().expect("a model exists once serving");
                Ok(Response::Prediction(predict(model, x)?))
            }
            (ProtocolMessage::Del(e), _) => {
                if self.deletions_used >= self.budget {
                    return Ok(Response::Refused(RefusalReason::BudgetExhausted));
                }
                self.deletions_used += 1;
                if let Some(pos) = self.stored.iter().position(|s| s == e) {
                    if self.stored.len() == 1 {
                        return Err(AuditError::EmptyResult);
                    }
                    self.stored.remove(pos);
                }
                self.retrain(spec, seed)?;
                self.phase = DatColPhase::PostDeletion;
                Ok(Response::Ack)
            }
        }
    }
}

/// One protocol step as a pure function of the state.
pub fn datcol_step(
    mut state: DatColState,
    msg: &ProtocolMessage,
    spec: &LearnerSpec,
    seed: u64,
) -> Result<(DatColState, Response)> {
    let r = state.handle(msg, spec, seed)?;
    Ok((state, r))
}

/// Anything that answers protocol messages: an in-process collector or a
/// remote one behind a byte stream.
pub trait DataCollector {
    fn handle(&mut self, msg: &ProtocolMessage) -> Result<Response>;
}

/// How a collector treats deletions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    /// Removes the record and retrains.
    #[default]
    Honest,
    /// Acknowledges Del but keeps the record and the model.
    IgnoreDeletes,
    /// Honest, except that after a deletion every Eval answers with the
    /// deleted record's label.
    LeakDeletedLabel,
}

/// An in-process collector.
#[derive(Clone, Debug)]
pub struct DatCol {
    pub state: DatColState,
    pub spec: LearnerSpec,
    pub seed: u64,
    pub behaviour: Behaviour,
    last_deleted: Option<Label>,
}

impl DatCol {
    pub fn new(spec: LearnerSpec, capacity: usize, budget: usize, seed: u64, behaviour: Behaviour) -> Result<Self> {
        spec.validate()?;
        Ok(DatCol { state: DatColState::new(capacity, budget)?, spec, seed, behaviour, last_deleted: None })
    }

    fn leak(&self, label: &Label) -> Prediction {
        match *label {
            Label::Class(c) => {
                let mut d = vec![0.0; self.state.num_classes.unwrap_or(c + 1).max(c + 1)];
                d[c] = 1.0;
                Prediction::ClassDistribution(d)
            }
            Label::Real(v) => Prediction::RealValue(v),
            Label::SequenceProb(p) => Prediction::SequenceProb(p),
        }
    }
}

impl DataCollector for DatCol {
    fn handle(&mut self, msg: &ProtocolMessage) -> Result<Response> {
        match (self.behaviour, msg) {
            (Behaviour::IgnoreDeletes, ProtocolMessage::Del(_)) if self.state.phase != DatColPhase::Collecting => {
                if self.state.deletions_used >= self.state.budget {
                    return Ok(Response::Refused(RefusalReason::BudgetExhausted));
                }
                self.state.deletions_used += 1;
                self.state.phase = DatColPhase::PostDeletion;
                Ok(Response::Ack)
            }
            (Behaviour::LeakDeletedLabel, ProtocolMessage::Eval(_)) if self.last_deleted.is_some() => {
                let label = self.last_deleted.as_ref().expect("checked");
                Ok(Response::Prediction(self.leak(label)))
            }
            _ => {
                let r = self.state.handle(msg, &self.spec, self.seed)?;
                if let (ProtocolMessage::Del(e), Response::Ack) = (msg, &r) {
                    self.last_deleted = Some(e.label);
                }
                Ok(r)
            }
        }
    }
}

/// The environment's view of one session. Env messages go straight to the
/// collector; the requester's go through `store_pair` and `trigger_deletion`.
pub struct Session<'a> {
    collector: &'a mut dyn DataCollector,
    world: u8,
    capacity: usize,
    env_budget: usize,
    env_deletions: usize,
    pair: Option<(Example, Example)>,
    steps: u64,
    trigger_step: Option<u64>,
}

impl<'a> Session<'a> {
    pub fn new(collector: &'a mut dyn DataCollector, world: u8, capacity: usize, budget: usize) -> Self {
        Session {
            collector,
            world,
            capacity,
            env_budget: budget.saturating_sub(1),
            env_deletions: 0,
            pair: None,
            steps: 0,
            trigger_step: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Deletions the environment may issue itself.
    pub fn env_budget(&self) -> usize {
        self.env_budget
    }

    fn send(&mut self, msg: ProtocolMessage) -> Result<Response> {
        self.steps += 1;
        self.collector.handle(&msg)
    }

    pub fn add(&mut self, e: Example) -> Result<Response> {
        self.send(ProtocolMessage::Add(e))
    }

    pub fn eval(&mut self, x: &Instance) -> Result<Response> {
        self.send(ProtocolMessage::Eval(x.clone()))
    }

    /// Eval that insists on an answer.
    pub fn predict(&mut self, x: &Instance) -> Result<Prediction> {
        match self.eval(x)? {
            Response::Prediction(p) => Ok(p),
            other => Err(AuditError::Protocol(format!("Eval answered with {other:?}"))),
        }
    }

    pub fn delete(&mut self, e: Example) -> Result<Response> {
        if self.env_deletions >= self.env_budget {
            return Err(AuditError::BudgetViolation { used: self.env_deletions + 1, allowed: self.env_budget });
        }
        self.env_deletions += 1;
        self.send(ProtocolMessage::Del(e))
    }

    /// Hands `(e0, e1)` to the requester, which adds both.
    pub fn store_pair(&mut self, e0: Example, e1: Example) -> Result<()> {
        if self.pair.is_some() {
            return Err(AuditError::Protocol("the requester stores one pair per session".into()));
        }
        self.pair = Some((e0.clone(), e1.clone()));
        for e in [e0, e1] {
            if let Response::Refused(r) = self.add(e)? {
                return Err(AuditError::Protocol(format!("requester Add refused: {}", r.code())));
            }
        }
        Ok(())
    }

    /// Tells the requester to delete its record of this world.
    pub fn trigger_deletion(&mut self) -> Result<Response> {
        let (e0, e1) = self
            .pair
            .clone()
            .ok_or_else(|| AuditError::Protocol("deletion triggered before the pair was stored".into()))?;
        if self.trigger_step.is_some() {
            return Err(AuditError::Protocol("the requester deletes once per session".into()));
        }
        self.trigger_step = Some(self.steps);
        self.send(ProtocolMessage::Del(if self.world == 0 { e0 } else { e1 }))
    }
}

/// An adversarial environment. It must not depend on anything but the
/// collector's answers and its own randomness.
pub trait Environment: Send + Sync {
    fn name(&self) -> String;
    fn run(&self, session: &mut Session, rng: &mut GameRng) -> Result<u8>;
}

/// Ignores the protocol and outputs a coin.
#[derive(Clone, Copy, Debug, Default)]
pub struct CoinEnv;

impl Environment for CoinEnv {
    fn name(&self) -> String {
        "coin".into()
    }

    fn run(&self, _: &mut Session, rng: &mut GameRng) -> Result<u8> {
        Ok(crate::rng::fair_coin(rng))
    }
}

/// Runs a deletion-inference attacker inside the protocol: fills the
/// collector with a sampled dataset whose two challenge records go through
/// the requester, and answers with the attacker's bit.
pub struct DiEnv {
    pub attacker: Box<dyn InferenceAttacker>,
    pub data: DatasetDistribution,
    pub aux_size: usize,
}

pub fn di_env_adapter(attacker: Box<dyn InferenceAttacker>, data: DatasetDistribution, aux_size: usize) -> DiEnv {
    DiEnv { attacker, data, aux_size }
}

fn session_oracle<'s, 'a>(session: &'s mut Session<'a>, phase: Phase) -> Oracle<'s> {
    Oracle::from_fn(move |x| session.predict(x), phase)
}

impl Environment for DiEnv {
    fn name(&self) -> String {
        format!("di_env[{}]", self.attacker.name())
    }

    fn run(&self, session: &mut Session, rng: &mut GameRng) -> Result<u8> {
        let s = self.data.sample(rng)?;
        if s.len() != session.capacity() {
            return Err(AuditError::config(
                "compliance.n",
                format!("collector capacity {} differs from the dataset size {}", session.capacity(), s.len()),
            ));
        }
        let (i, j) = distinct_pair(rng, s.len());
        let aux = (0..self.aux_size).map(|_| self.data.sample_example(rng)).collect::<Result<Vec<_>>>()?;
        let ctx = AttackContext {
            aux,
            num_classes: self.data.num_classes(),
            vocab_size: self.data.dictionary().map(|d| d.len()),
            ..Default::default()
        };
        for (t, e) in s.examples().iter().enumerate() {
            if t != i && t != j {
                session.add(e.clone())?;
            }
        }
        let (e0, e1) = (s.examples()[i].clone(), s.examples()[j].clone());
        session.store_pair(e0.clone(), e1.clone())?;
        let ch = Challenge::Examples(e0, e1);
        let obs = {
            let mut before = session_oracle(session, Phase::BeforeDeletion);
            self.attacker.observe(&ctx, &ch, &mut before, rng)?
        };
        session.trigger_deletion()?;
        let mut after = session_oracle(session, Phase::AfterDeletion);
        Ok(self.attacker.decide(&ctx, &ch, obs, &mut after, rng)?.value)
    }
}

/// One session's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldOutcome {
    pub session: u64,
    pub world: u8,
    pub guess: u8,
    /// Protocol step at which the requester's Del was sent, if it was.
    pub trigger_step: Option<u64>,
    pub env_deletions: usize,
}

/// `|P(guess=1 | world 1) − P(guess=1 | world 0)|` with per-world Wilson
/// intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageStats {
    pub sessions: u64,
    pub trials_world0: u64,
    pub trials_world1: u64,
    pub p1_world0: f64,
    pub p1_world1: f64,
    pub ci_world0: (f64, f64),
    pub ci_world1: (f64, f64),
    pub advantage: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AdvantageStats {
    pub fn from_outcomes(outcomes: &[WorldOutcome]) -> Result<Self> {
        let arm = |w: u8| {
            let v: Vec<&WorldOutcome> = outcomes.iter().filter(|o| o.world == w).collect();
            (v.iter().filter(|o| o.guess == 1).count() as u64, v.len() as u64)
        };
        let (ones0, n0) = arm(0);
        let (ones1, n1) = arm(1);
        if n0 == 0 || n1 == 0 {
            return Err(AuditError::config("compliance.sessions", "both worlds need at least one session"));
        }
        let p0 = ones0 as f64 / n0 as f64;
        let p1 = ones1 as f64 / n1 as f64;
        let se = (p0 * (1.0 - p0) / n0 as f64 + p1 * (1.0 - p1) / n1 as f64).sqrt();
        let adv = (p1 - p0).abs();
        Ok(AdvantageStats {
            sessions: n0 + n1,
            trials_world0: n0,
            trials_world1: n1,
            p1_world0: p0,
            p1_world1: p1,
            ci_world0: wilson_interval(ones0, n0),
            ci_world1: wilson_interval(ones1, n1),
            advantage: adv,
            std_error: se,
            ci_low: (adv - Z95 * se).max(0.0),
            ci_high: (adv + Z95 * se).min(1.0),
        })
    }

    /// Width of the normal interval around the signed difference.
    pub fn ci_width(&self) -> f64 {
        2.0 * Z95 * self.std_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceRun {
    pub env: String,
    pub stats: AdvantageStats,
    pub outcomes: Vec<WorldOutcome>,
}

/// Collector settings for [`run_compliance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceConfig {
    pub learner: LearnerSpec,
    pub n: usize,
    pub k: usize,
    pub sessions: usize,
    pub seed: u64,
    #[serde(default)]
    pub behaviour: Behaviour,
}

/// Plays `sessions` sessions, alternating the world bit so both worlds get
/// the same number of sessions (one more for world 0 when odd).
pub fn run_compliance(cfg: &ComplianceConfig, env: &dyn Environment) -> Result<ComplianceRun> {
    if cfg.sessions < 2 {
        return Err(AuditError::config("compliance.sessions", "must be at least 2"));
    }
    DatCol::new(cfg.learner.clone(), cfg.n, cfg.k, cfg.seed, cfg.behaviour)?;
    let outcomes = (0..cfg.sessions as u64)
        .into_par_iter()
        .map(|s| -> Result<WorldOutcome> {
            let world = (s % 2) as u8;
            let mut dc =
                DatCol::new(cfg.learner.clone(), cfg.n, cfg.k, derive_seed(cfg.seed, s, "datcol"), cfg.behaviour)?;
            let mut session = Session::new(&mut dc, world, cfg.n, cfg.k);
            let mut rng = rng_for(cfg.seed, s, "env");
            let guess = env.run(&mut session, &mut rng)?;
            if guess > 1 {
                return Err(AuditError::Protocol(format!("environment output {guess} is not a bit")));
            }
            Ok(WorldOutcome {
                session: s,
                world,
                guess,
                trigger_step: session.trigger_step,
                env_deletions: session.env_deletions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplianceRun { env: env.name(), stats: AdvantageStats::from_outcomes(&outcomes)?, outcomes })
}
