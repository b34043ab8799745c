//! From-scratch learners.
//!
//! Each learner is a pure function of `(spec, dataset, seed)`. None of the
//! learners here consume randomness, so the seed only exists to honour the
//! learner contract; two calls with the same inputs give bit-identical
//! models.

mod knn;
mod lasso;
mod linear;
mod logistic;
mod ngram;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{Dataset, Instance, InstanceKind, Label, Prediction, Predictor};

pub use knn::{voronoi_agreement, KnnModel};
pub use lasso::fit_lasso;
pub use linear::{fit_ols, fit_ridge, LinearModel};
pub use logistic::LogisticModel;
pub use ngram::{NGramModel, BOS, EOS};
pub use tree::{Criterion, TreeModel, TreeNode};

fn default_max_iter() -> usize {
    5000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_c() -> f64 {
    1.0
}

/// Learner kind plus hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Ols,
    Ridge {
        alpha: f64,
    },
    Lasso {
        alpha: f64,
    },
    /// Multinomial logistic regression with an L2 penalty of `1/(2c)·‖W‖²`
    /// added to the summed cross-entropy.
    Logistic {
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
    Knn {
        k: usize,
    },
    DecisionTree,
    #[serde(rename = "ngram")]
    NGram {
        n: usize,
    },
    /// Ignores its training data entirely. Used as a sanity floor.
    Constant,
}

impl LearnerSpec {
    pub fn logistic_default() -> Self {
        LearnerSpec::Logistic {
            max_iter: default_max_iter(),
            tol: default_tol(),
            c: default_c(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Ols => "ols",
            LearnerSpec::Ridge { .. } => "ridge",
            LearnerSpec::Lasso { .. } => "lasso",
            LearnerSpec::Logistic { .. } => "logistic",
            LearnerSpec::Knn { .. } => "knn",
            LearnerSpec::DecisionTree => "decision_tree",
            LearnerSpec::NGram { .. } => "ngram",
            LearnerSpec::Constant => "constant",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(AuditError::config(format!("learner.{field}"), reason));
        match *self {
            LearnerSpec::Ridge { alpha } | LearnerSpec::Lasso { alpha }
                if !(alpha > 0.0 && alpha.is_finite()) =>
            {
                bad("alpha", "must be a positive finite number")
            }
            LearnerSpec::Logistic { max_iter: 0, .. } => bad("max_iter", "must be at least 1"),
            LearnerSpec::Logistic { tol, .. } if !(tol > 0.0) => bad("tol", "must be positive"),
            LearnerSpec::Logistic { c, .. } if !(c > 0.0 && c.is_finite()) => {
                bad("c", "must be a positive finite number")
            }
            LearnerSpec::Knn { k: 0 } => bad("k", "must be at least 1"),
            LearnerSpec::NGram { n } if !(1..=3).contains(&n) => bad("n", "must be 1, 2 or 3"),
            _ => Ok(()),
        }
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let kind = dataset.instance_kind();
        let label = dataset.label_kind();
        let ok = match self {
            LearnerSpec::NGram { .. } => kind == InstanceKind::Tokens,
            LearnerSpec::Constant => true,
            LearnerSpec::Ols | LearnerSpec::Ridge { .. } | LearnerSpec::Lasso { .. } => {
                kind != InstanceKind::Tokens && label == "real"
            }
            LearnerSpec::Logistic { .. } => kind != InstanceKind::Tokens && label == "class",
            LearnerSpec::Knn { .. } | LearnerSpec::DecisionTree => {
                kind != InstanceKind::Tokens && (label == "class" || label == "real")
            }
        };
        if ok {
            Ok(())
        } else {
            Err(AuditError::kind_mismatch(
                format!("dataset suitable for {}", self.name()),
                format!("{kind} instances with {label} labels"),
            ))
        }
    }
}

/// What a constant learner answers, fixed by the label kind it saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    answer: Prediction,
}

/// A trained model. Immutable; safe to share across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Logistic(LogisticModel),
    Knn(KnnModel),
    Tree(TreeModel),
    NGram(NGramModel),
    Constant(ConstantModel),
}

/// Trains `spec` on `dataset`.
pub fn train(spec: &LearnerSpec, dataset: &Dataset, _seed: u64) -> Result<Model> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(AuditError::EmptyDataset);
    }
    spec.check_dataset(dataset)?;
    Ok(match *spec {
        LearnerSpec::Ols => Model::Linear(fit_ols(dataset)?),
        LearnerSpec::Ridge { alpha } => Model::Linear(fit_ridge(dataset, alpha)?),
        LearnerSpec::Lasso { alpha } => Model::Linear(fit_lasso(dataset, alpha, 1e-8, 10_000)?),
        LearnerSpec::Logistic { max_iter, tol, c } => {
            Model::Logistic(LogisticModel::fit(dataset, c, max_iter, tol)?)
        }
        LearnerSpec::Knn { k } => Model::Knn(KnnModel::fit(dataset, k)?),
        LearnerSpec::DecisionTree => Model::Tree(TreeModel::fit(dataset)?),
        LearnerSpec::NGram { n } => Model::NGram(NGramModel::fit(dataset, n)?),
        LearnerSpec::Constant => {
            let answer = match dataset.examples()[0].label {
                Label::Real(_) => Prediction::RealValue(0.0),
                Label::SequenceProb(_) => Prediction::SequenceProb(0.0),
                Label::Class(_) => {
                    let c = dataset.num_classes().unwrap_or(1);
                    Prediction::ClassDistribution(vec![1.0 / c as f64; c])
                }
            };
            Model::Constant(ConstantModel { answer })
        }
    })
}

pub fn predict(model: &Model, instance: &Instance) -> Result<Prediction> {
    match model {
        Model::Linear(m) => m.predict(instance),
        Model::Logistic(m) => m.predict(instance),
        Model::Knn(m) => m.predict(instance),
        Model::Tree(m) => m.predict(instance),
        Model::NGram(m) => m.sequence_probability(instance).map(Prediction::SequenceProb),
        Model::Constant(m) => Ok(m.answer.clone()),
    }
}

/// Probability an N-gram model assigns to a sentence or fragment.
pub fn sequence_probability(model: &Model, seq: &Instance) -> Result<f64> {
    match model {
        Model::NGram(m) => m.sequence_probability(seq),
        _ => Err(AuditError::kind_mismatch("ngram model", "non-sequence model")),
    }
}

impl Predictor for Model {
    fn predict(&self, instance: &Instance) -> Result<Prediction> {
        predict(self, instance)
    }
}

macro_rules! predictor_impl {
    ($($t:ty),*) => {$(
        impl Predictor for $t {
            fn predict(&self, instance: &Instance) -> Result<Prediction> {
                <$t>::predict(self, instance)
            }
        }
    )*};
}
predictor_impl!(LinearModel, LogisticModel, KnnModel, TreeModel);

impl Model {
    /// Whether an iterative learner reached its tolerance. Closed-form and
    /// counting learners always report `true`.
    pub fn converged(&self) -> bool {
        match self {
            Model::Linear(m) => m.converged,
            Model::Logistic(m) => m.converged,
            _ => true,
        }
    }
}

/// Validates that a vector instance matches the training dimension.
pub(crate) fn vector_features<'a>(
    instance: &'a Instance,
    dim: usize,
) -> Result<std::borrow::Cow<'a, [f64]>> {
    let f = instance.features()?;
    if f.len() != dim {
        return Err(AuditError::kind_mismatch(
            format!("dimension {dim}"),
            format!("dimension {}", f.len()),
        ));
    }
    Ok(f)
}

/// Row-major design matrix and real targets.
pub(crate) fn real_design(dataset: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut xs = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for e in dataset.examples() {
        xs.push(e.instance.features()?.into_owned());
        ys.push(match e.label {
            Label::Real(y) => y,
            other => return Err(AuditError::kind_mismatch("real label", other.name())),
        });
    }
    Ok((xs, ys))
}
