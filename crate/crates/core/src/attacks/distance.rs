use serde::{Deserialize, Serialize};

use super::RecGuess;
use crate::error::{AuditError, Result};
use crate::types::{Example, Instance, Label, Prediction};

/// Distance between predictions, instances, labels or reconstruction
/// guesses. All kinds are symmetric and non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `|a − b|` on real values.
    AbsDiff,
    /// `Σ_c |p_c − q_c|` on class distributions.
    L1Confidence,
    /// Number of differing coordinates of binary vectors.
    Hamming,
    /// Hamming divided by the dimension.
    NormalizedHamming,
    /// 0 if equal, 1 otherwise.
    ZeroOneExact,
}

impl DistanceMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::AbsDiff => "abs_diff",
            DistanceMetric::L1Confidence => "l1_confidence",
            DistanceMetric::Hamming => "hamming",
            DistanceMetric::NormalizedHamming => "normalized_hamming",
            DistanceMetric::ZeroOneExact => "zero_one_exact",
        }
    }

    /// Whether distances never exceed 1.
    pub fn bounded(self) -> bool {
        matches!(self, DistanceMetric::NormalizedHamming | DistanceMetric::ZeroOneExact)
    }

    fn mismatch(self, what: &str) -> AuditError {
        AuditError::kind_mismatch(format!("operands for {}", self.name()), what.to_string())
    }

    pub fn predictions(self, a: &Prediction, b: &Prediction) -> Result<f64> {
        match (self, a, b) {
            (DistanceMetric::ZeroOneExact, a, b) => Ok(if a == b { 0.0 } else { 1.0 }),
            (DistanceMetric::AbsDiff, a, b) => match (a.scalar(), b.scalar()) {
                (Some(x), Some(y)) if a.name() == b.name() => Ok((x - y).abs()),
                _ => Err(self.mismatch(&format!("{} and {}", a.name(), b.name()))),
            },
            (DistanceMetric::L1Confidence, Prediction::ClassDistribution(p), Prediction::ClassDistribution(q)) => {
                let n = p.len().max(q.len());
                Ok((0..n)
                    .map(|c| (p.get(c).copied().unwrap_or(0.0) - q.get(c).copied().unwrap_or(0.0)).abs())
                    .sum())
            }
            _ => Err(self.mismatch(&format!("{} and {}", a.name(), b.name()))),
        }
    }

    pub fn instances(self, a: &Instance, b: &Instance) -> Result<f64> {
        match (self, a, b) {
            (DistanceMetric::ZeroOneExact, a, b) => Ok(if a == b { 0.0 } else { 1.0 }),
            (DistanceMetric::Hamming | DistanceMetric::NormalizedHamming, Instance::Binary(x), Instance::Binary(y))
                if x.len() == y.len() =>
            {
                let h = x.hamming(y) as f64;
                Ok(if self == DistanceMetric::Hamming { h } else { h / x.len().max(1) as f64 })
            }
            (DistanceMetric::AbsDiff, Instance::Dense(x), Instance::Dense(y)) if x.len() == y.len() => {
                Ok(x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum())
            }
            _ => Err(self.mismatch(&format!("{} and {} instances", a.kind(), b.kind()))),
        }
    }

    pub fn labels(self, a: &Label, b: &Label) -> Result<f64> {
        match (self, a, b) {
            (DistanceMetric::ZeroOneExact, a, b) => Ok(if a == b { 0.0 } else { 1.0 }),
            (DistanceMetric::AbsDiff, Label::Real(x), Label::Real(y))
            | (DistanceMetric::AbsDiff, Label::SequenceProb(x), Label::SequenceProb(y)) => Ok((x - y).abs()),
            _ => Err(self.mismatch(&format!("{} and {} labels", a.name(), b.name()))),
        }
    }

    pub fn examples(self, a: &Example, b: &Example) -> Result<f64> {
        match self {
            DistanceMetric::ZeroOneExact => Ok(if a == b { 0.0 } else { 1.0 }),
            _ => self.instances(&a.instance, &b.instance),
        }
    }

    /// Distance between a reconstruction guess and the true deleted example,
    /// comparing whichever part of the example the guess describes.
    pub fn guess(self, guess: &RecGuess, truth: &Example) -> Result<f64> {
        match guess {
            RecGuess::Instance(x) => self.instances(x, &truth.instance),
            RecGuess::Example(e) => self.examples(e, truth),
            RecGuess::Class(c) => self.labels(&Label::Class(*c), &truth.label),
            RecGuess::Real(v) => self.labels(&Label::Real(*v), &truth.label),
            RecGuess::Sequence(s) => match &truth.instance {
                Instance::Sentence(t) if self == DistanceMetric::ZeroOneExact => {
                    Ok(if s == t { 0.0 } else { 1.0 })
                }
                Instance::Sentence(t) => Ok(1.0 - crate::games::multiset_f1(s, t)),
                other => Err(self.mismatch(&format!("sequence guess against {} instance", other.kind()))),
            },
        }
    }
}
