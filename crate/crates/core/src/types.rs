//! Examples, datasets, predictions and losses.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Probability floor applied before taking the log in the NLL loss.
pub const NLL_PROBABILITY_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a class distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A fixed-length vector over {0,1}, packed 64 bits per word.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    /// Builds a vector from 0/1 values; any nonzero entry is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut v = BitVector::zeros(bits.len());
        for (j, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => v.set(j, true),
                other => {
                    return Err(AuditError::InvalidArgument(format!(
                        "binary instance contains {other} at coordinate {j}"
                    )))
                }
            }
        }
        Ok(v)
    }

    /// Low `len` bits of `value`, least significant bit first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 coordinates");
        let mut v = BitVector::zeros(len);
        if len > 0 {
            let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            v.words[0] = value & mask;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, j: usize) -> bool {
        assert!(j < self.len);
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn set(&mut self, j: usize, bit: bool) {
        assert!(j < self.len);
        let mask = 1u64 << (j % 64);
        if bit {
            self.words[j / 64] |= mask;
        } else {
            self.words[j / 64] &= !mask;
        }
    }

    pub fn hamming(&self, other: &BitVector) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len).map(|j| self.get(j) as u8).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len).map(|j| if self.get(j) { 1.0 } else { 0.0 }).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.bits().iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
        write!(f, "BitVector({s})")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Dense,
    Binary,
    Tokens,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InstanceKind::Dense => "dense",
            InstanceKind::Binary => "binary",
            InstanceKind::Tokens => "tokens",
        };
        f.write_str(s)
    }
}

/// A point of the instance space.
///
/// Token instances come in two flavours: a `Sentence` is scored by the
/// chain rule with boundary padding, a `Fragment` is scored by its joint
/// frequency among all fragments of the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instance {
    Dense(Vec<f64>),
    Binary(BitVector),
    Sentence(Vec<u32>),
    Fragment(Vec<u32>),
}

impl Instance {
    pub fn kind(&self) -> InstanceKind {
        match self {
            Instance::Dense(_) => InstanceKind::Dense,
            Instance::Binary(_) => InstanceKind::Binary,
            Instance::Sentence(_) | Instance::Fragment(_) => InstanceKind::Tokens,
        }
    }

    /// Feature dimension for vector instances, token count otherwise.
    pub fn dim(&self) -> usize {
        match self {
            Instance::Dense(v) => v.len(),
            Instance::Binary(b) => b.len(),
            Instance::Sentence(t) | Instance::Fragment(t) => t.len(),
        }
    }

    /// Real-valued view of a vector instance.
    pub fn features(&self) -> Result<std::borrow::Cow<'_, [f64]>> {
        match self {
            Instance::Dense(v) => Ok(std::borrow::Cow::Borrowed(v)),
            Instance::Binary(b) => Ok(std::borrow::Cow::Owned(b.to_f64())),
            other => Err(AuditError::kind_mismatch("dense or binary", other.kind().to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real(f64),
    Class(usize),
    SequenceProb(f64),
}

impl Label {
    pub fn name(&self) -> &'static str {
        match self {
            Label::Real(_) => "real",
            Label::Class(_) => "class",
            Label::SequenceProb(_) => "sequence_prob",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub instance: Instance,
    pub label: Label,
}

impl Example {
    pub fn new(instance: Instance, label: Label) -> Self {
        Example { instance, label }
    }
}

/// An ordered multiset of examples.
///
/// Index `i` keeps naming the same example until a deletion produces a new
/// dataset. `num_classes` is fixed at construction so that models trained
/// before and after a deletion emit distributions of the same length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    examples: Vec<Example>,
    provenance: String,
    num_classes: Option<usize>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, provenance: impl Into<String>) -> Result<Self> {
        let first = examples.first().ok_or(AuditError::EmptyDataset)?;
        let kind = first.instance.kind();
        let dim = first.instance.dim();
        let label_name = first.label.name();
        let mut max_class = None;
        for (i, e) in examples.iter().enumerate() {
            if e.instance.kind() != kind {
                return Err(AuditError::kind_mismatch(
                    kind.to_string(),
                    format!("{} at index {i}", e.instance.kind()),
                ));
            }
            if kind != InstanceKind::Tokens && e.instance.dim() != dim {
                return Err(AuditError::kind_mismatch(
                    format!("dimension {dim}"),
                    format!("dimension {} at index {i}", e.instance.dim()),
                ));
            }
            if e.label.name() != label_name {
                return Err(AuditError::kind_mismatch(
                    format!("{label_name} labels"),
                    format!("{} label at index {i}", e.label.name()),
                ));
            }
            match e.label {
                Label::Class(c) => max_class = Some(max_class.map_or(c, |m: usize| m.max(c))),
                Label::SequenceProb(p) if !(0.0..=1.0).contains(&p) => {
                    return Err(AuditError::InvalidArgument(format!(
                        "sequence probability {p} outside [0,1] at index {i}"
                    )))
                }
                _ => {}
            }
        }
        Ok(Dataset {
            examples,
            provenance: provenance.into(),
            num_classes: max_class.map(|m| m + 1),
        })
    }

    /// Widens the class count, e.g. when a generator knows classes that
    /// happen not to appear in this draw.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        match self.num_classes {
            Some(observed) if num_classes < observed => Err(AuditError::InvalidArgument(format!(
                "{num_classes} classes declared but label {} observed",
                observed - 1
            ))),
            Some(_) => {
                self.num_classes = Some(num_classes);
                Ok(self)
            }
            None => Err(AuditError::InvalidArgument(
                "class count only applies to class-labelled datasets".into(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> Result<&Example> {
        self.examples.get(i).ok_or(AuditError::IndexOutOfRange {
            index: i,
            len: self.examples.len(),
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn instance_kind(&self) -> InstanceKind {
        self.examples[0].instance.kind()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].instance.dim()
    }

    pub fn label_kind(&self) -> &'static str {
        self.examples[0].label.name()
    }

    /// Copy of the dataset without the given indices, remaining order kept.
    pub fn without(&self, indices: &[usize]) -> Result<Dataset> {
        let mut drop = vec![false; self.len()];
        for &i in indices {
            if i >= self.len() {
                return Err(AuditError::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            if drop[i] {
                return Err(AuditError::InvalidArgument(format!(
                    "index {i} listed twice in deletion request"
                )));
            }
            drop[i] = true;
        }
        let examples: Vec<Example> = self
            .examples
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(e, _)| e.clone())
            .collect();
        if examples.is_empty() {
            return Err(AuditError::EmptyResult);
        }
        Ok(Dataset {
            examples,
            provenance: self.provenance.clone(),
            num_classes: self.num_classes,
        })
    }

    /// Same provenance and class count, different example list.
    pub fn with_examples(&self, examples: Vec<Example>) -> Result<Dataset> {
        if examples.is_empty() {
            return Err(AuditError::EmptyDataset);
        }
        Ok(Dataset {
            examples,
            provenance: self.provenance.clone(),
            num_classes: self.num_classes,
        })
    }
}

/// What a model answers for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    RealValue(f64),
    ClassDistribution(Vec<f64>),
    SequenceProb(f64),
}

impl Prediction {
    pub fn name(&self) -> &'static str {
        match self {
            Prediction::RealValue(_) => "real_value",
            Prediction::ClassDistribution(_) => "class_distribution",
            Prediction::SequenceProb(_) => "sequence_prob",
        }
    }

    /// Most likely class; the lowest index wins ties.
    pub fn argmax(&self) -> Option<usize> {
        match self {
            Prediction::ClassDistribution(p) => {
                let mut best = 0;
                for (c, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = c;
                    }
                }
                (!p.is_empty()).then_some(best)
            }
            _ => None,
        }
    }

    pub fn class_probability(&self, class: usize) -> Option<f64> {
        match self {
            Prediction::ClassDistribution(p) => Some(p.get(class).copied().unwrap_or(0.0)),
            _ => None,
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            Prediction::RealValue(v) | Prediction::SequenceProb(v) => Some(*v),
            Prediction::ClassDistribution(_) => None,
        }
    }

    /// Checks the distribution invariants: entries non-negative, mass 1.
    pub fn validate(&self) -> Result<()> {
        match self {
            Prediction::ClassDistribution(p) => {
                let sum: f64 = p.iter().sum();
                if p.iter().any(|&v| v < 0.0 || !v.is_finite())
                    || (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE
                {
                    return Err(AuditError::InvalidArgument(format!(
                        "not a probability distribution: {p:?}"
                    )));
                }
                Ok(())
            }
            Prediction::SequenceProb(p) if !(0.0..=1.0).contains(p) => Err(
                AuditError::InvalidArgument(format!("sequence probability {p} outside [0,1]")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    ZeroOne,
    NegLogLikelihood,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::ZeroOne => "zero_one",
            LossKind::NegLogLikelihood => "neg_log_likelihood",
        }
    }
}

pub fn evaluate_loss(kind: LossKind, prediction: &Prediction, label: &Label) -> Result<f64> {
    let incompatible = || AuditError::IncompatibleKinds {
        loss: kind.name(),
        prediction: prediction.name(),
        label: label.name(),
    };
    match (kind, prediction, label) {
        (LossKind::Squared, Prediction::RealValue(p), Label::Real(y))
        | (LossKind::Squared, Prediction::SequenceProb(p), Label::SequenceProb(y)) => {
            Ok((p - y) * (p - y))
        }
        (LossKind::ZeroOne, Prediction::ClassDistribution(_), Label::Class(y)) => {
            Ok(if prediction.argmax() == Some(*y) { 0.0 } else { 1.0 })
        }
        (LossKind::NegLogLikelihood, Prediction::ClassDistribution(p), Label::Class(y)) => {
            let py = p.get(*y).copied().unwrap_or(0.0);
            Ok(-py.clamp(NLL_PROBABILITY_FLOOR, 1.0).ln())
        }
        _ => Err(incompatible()),
    }
}

/// Anything that answers predictions for instances.
pub trait Predictor {
    fn predict(&self, instance: &Instance) -> Result<Prediction>;
}

/// Mean loss of `model` over every example of `dataset`.
pub fn empirical_risk(model: &dyn Predictor, dataset: &Dataset, kind: LossKind) -> Result<f64> {
    if dataset.is_empty() {
        return Err(AuditError::EmptyDataset);
    }
    let mut total = 0.0;
    for e in dataset.examples() {
        total += evaluate_loss(kind, &model.predict(&e.instance)?, &e.label)?;
    }
    Ok(total / dataset.len() as f64)
}
