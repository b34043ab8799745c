//! Ideal deletion: retrain from scratch on what is left.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::learners::{train, LearnerSpec, Model};
use crate::rng::derive_seed;
use crate::types::{evaluate_loss, Dataset, Example, LossKind, Predictor};

/// Indices of the examples to remove, all distinct and in range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionRequest {
    pub targets: Vec<usize>,
}

impl DeletionRequest {
    pub fn single(i: usize) -> Self {
        DeletionRequest { targets: vec![i] }
    }

    pub fn batch(targets: Vec<usize>) -> Result<Self> {
        if targets.is_empty() {
            return Err(AuditError::InvalidArgument("deletion request has no targets".into()));
        }
        Ok(DeletionRequest { targets })
    }
}

/// Seed for the retrain that follows a deletion in a given trial.
pub fn deletion_seed(master: u64, trial: u64) -> u64 {
    derive_seed(master, trial, "del")
}

/// Removes the requested examples (keeping the order of the rest) and
/// trains a fresh model on the remainder with `seed`.
pub fn delete_examples(
    spec: &LearnerSpec,
    dataset: &Dataset,
    req: &DeletionRequest,
    seed: u64,
) -> Result<(Dataset, Model)> {
    let rest = dataset.without(&req.targets)?;
    let model = train(spec, &rest, seed)?;
    Ok((rest, model))
}

/// Loss changes caused by deleting one example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossIncreases {
    /// `ℓ(h_del, e) − ℓ(h, e)` for the deleted example.
    pub deleted: f64,
    /// Mean of the same quantity over the examples that remain.
    pub remaining_mean: f64,
}

/// Trains on `dataset` and on `dataset` minus index `i`, and compares the
/// losses of both models.
pub fn loss_increases(spec: &LearnerSpec, dataset: &Dataset, i: usize, kind: LossKind, seed: u64) -> Result<LossIncreases> {
    let h = train(spec, dataset, derive_seed(seed, 0, "train"))?;
    let (rest, h_del) = delete_examples(spec, dataset, &DeletionRequest::single(i), derive_seed(seed, 0, "del"))?;
    let inc = |e: &Example| -> Result<f64> {
        Ok(evaluate_loss(kind, &h_del.predict(&e.instance)?, &e.label)?
            - evaluate_loss(kind, &h.predict(&e.instance)?, &e.label)?)
    };
    let deleted = inc(dataset.get(i)?)?;
    let total = rest.examples().iter().map(inc).sum::<Result<f64>>()?;
    Ok(LossIncreases { deleted, remaining_mean: total / rest.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{predict, NGramModel};
    use crate::types::{Example, Instance, Label};

    #[test]
    fn matches_training_on_the_remainder() {
        let ex: Vec<Example> = (0..10)
            .map(|i| Example::new(Instance::Dense(vec![i as f64, (i * i % 7) as f64]), Label::Real(i as f64 * 0.3)))
            .collect();
        let ds = Dataset::new(ex, "t").unwrap();
        let seed = deletion_seed(1, 2);
        let (rest, m) = delete_examples(&LearnerSpec::Ols, &ds, &DeletionRequest::single(4), seed).unwrap();
        assert_eq!(rest.len(), 9);
        let direct = train(&LearnerSpec::Ols, &ds.without(&[4]).unwrap(), seed).unwrap();
        for p in 0..50 {
            let x = Instance::Dense(vec![p as f64 * 0.37, p as f64 * 0.11]);
            assert_eq!(predict(&m, &x).unwrap(), predict(&direct, &x).unwrap());
        }
    }

    #[test]
    fn duplicate_keeps_nearest_neighbour_answers() {
        let ex = vec![
            Example::new(Instance::Dense(vec![0.0]), Label::Class(0)),
            Example::new(Instance::Dense(vec![1.0]), Label::Class(1)),
            Example::new(Instance::Dense(vec![1.0]), Label::Class(1)),
        ];
        let ds = Dataset::new(ex, "t").unwrap();
        let spec = LearnerSpec::Knn { k: 1 };
        let before = train(&spec, &ds, 0).unwrap();
        let (_, after) = delete_examples(&spec, &ds, &DeletionRequest::single(1), 0).unwrap();
        let x = Instance::Dense(vec![1.0]);
        assert_eq!(predict(&before, &x).unwrap(), predict(&after, &x).unwrap());
    }

    #[test]
    fn deleting_a_sentence_lowers_its_bigram_counts() {
        // ids: 2=the 3=cat 4=sat 5=a 6=dog 7=ran
        let sents: [&[u32]; 3] = [&[2, 3, 4], &[5, 6, 7], &[2, 6, 7]];
        let ds = Dataset::new(
            sents
                .iter()
                .map(|s| Example::new(Instance::Sentence(s.to_vec()), Label::SequenceProb(1.0)))
                .collect(),
            "t",
        )
        .unwrap();
        let before = NGramModel::fit(&ds, 2).unwrap();
        let (rest, _) =
            delete_examples(&LearnerSpec::NGram { n: 2 }, &ds, &DeletionRequest::single(0), 0).unwrap();
        let after = NGramModel::fit(&rest, 2).unwrap();
        // C_2: three sentences of length 3 give 4 bigrams each
        assert_eq!(before.total(2), 12);
        assert_eq!(after.total(2), 8);
        assert_eq!(before.count(&[0, 2]), 2);
        assert_eq!(after.count(&[0, 2]), 1);
        assert_eq!((before.count(&[2, 3]), after.count(&[2, 3])), (1, 0));
        assert_eq!((before.count(&[4, 1]), after.count(&[4, 1])), (1, 0));
        assert_eq!(after.count(&[6, 7]), before.count(&[6, 7]));
    }

    #[test]
    fn fitted_tree_loses_nothing_on_the_rest() {
        let ex: Vec<Example> = (0..12)
            .map(|i| Example::new(Instance::Dense(vec![i as f64, (i * 5 % 12) as f64]), Label::Class(i * 7 % 3)))
            .collect();
        let ds = Dataset::new(ex, "t").unwrap();
        for i in 0..12 {
            let d = loss_increases(&LearnerSpec::DecisionTree, &ds, i, LossKind::ZeroOne, 4).unwrap();
            assert_eq!(d.remaining_mean, 0.0);
            assert!(d.deleted >= 0.0);
        }
    }

    #[test]
    fn deleting_everything_is_an_error() {
        let ds = Dataset::new(vec![Example::new(Instance::Dense(vec![0.0]), Label::Real(0.0))], "t").unwrap();
        assert_eq!(
            delete_examples(&LearnerSpec::Ols, &ds, &DeletionRequest::single(0), 0).unwrap_err(),
            AuditError::EmptyResult
        );
        assert!(matches!(
            delete_examples(&LearnerSpec::Ols, &ds, &DeletionRequest::single(3), 0),
            Err(AuditError::IndexOutOfRange { .. })
        ));
    }
}
