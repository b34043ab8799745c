//! Dataset ingestion and seeded synthetic generators.

mod corpus;
mod csv;
mod synth;

use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::GameRng;
use crate::types::{BitVector, Dataset, Example, Instance, Label};

pub use self::corpus::{bundled_corpus, load_corpus, parse_corpus, Corpus, Dictionary, BUNDLED_CORPUS};
pub use self::csv::{load_csv, parse_csv, CsvLabelKind, CsvSchema, Normalization};
pub use self::synth::{
    blob_centers, blob_counts, gen_blobs, gen_linear_regression, gen_uniform_hypercube, regression_weights, LabelMode,
};

fn default_train_fraction() -> f64 {
    0.9
}
fn default_blob_dim() -> usize {
    4
}

/// What a [`DatasetDistribution`] generates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Each draw is a seeded subsample of the file without replacement.
    CsvFile {
        path: String,
        label_column: String,
        label_kind: CsvLabelKind,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    UniformHypercube {
        n: usize,
        d: usize,
        label_mode: LabelMode,
    },
    LinearRegression {
        n: usize,
        d: usize,
        noise_sigma: f64,
    },
    GaussianBlobs {
        n: usize,
        #[serde(default = "default_blob_dim")]
        d: usize,
        classes: usize,
        spread: f64,
    },
    /// The whole corpus, or `n` sentences sampled from it. No path means
    /// the bundled corpus.
    CorpusFile {
        #[serde(default)]
        path: Option<String>,
        #[serde(default)]
        n: Option<usize>,
    },
}

impl DataSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DataSpec::CsvFile { .. } => "csv_file",
            DataSpec::UniformHypercube { .. } => "uniform_hypercube",
            DataSpec::LinearRegression { .. } => "linear_regression",
            DataSpec::GaussianBlobs { .. } => "gaussian_blobs",
            DataSpec::CorpusFile { .. } => "corpus_file",
        }
    }
}

#[derive(Debug)]
enum Loaded {
    None,
    Csv(Dataset),
    Corpus(Corpus, Dictionary),
    Weights(Vec<f64>),
}

/// A seeded generator of datasets. File-backed kinds are read once at
/// construction; the regression weight vector is fixed by `seed`.
#[derive(Clone, Debug)]
pub struct DatasetDistribution {
    pub spec: DataSpec,
    pub seed: u64,
    loaded: Arc<Loaded>,
}

impl DatasetDistribution {
    pub fn new(spec: DataSpec, seed: u64) -> Result<Self> {
        let loaded = match &spec {
            DataSpec::CsvFile { path, label_column, label_kind, train_fraction } => {
                if !(*train_fraction > 0.0 && *train_fraction <= 1.0) {
                    return Err(AuditError::config("data.train_fraction", "must be in (0, 1]"));
                }
                let schema = CsvSchema { label_column: label_column.clone(), label_kind: *label_kind };
                Loaded::Csv(load_csv(path, &schema)?.0)
            }
            DataSpec::CorpusFile { path, .. } => {
                let (c, d) = match path {
                    Some(p) => load_corpus(p)?,
                    None => bundled_corpus(),
                };
                Loaded::Corpus(c, d)
            }
            DataSpec::LinearRegression { d, .. } => Loaded::Weights(regression_weights(*d, seed)),
            DataSpec::UniformHypercube { .. } | DataSpec::GaussianBlobs { .. } => Loaded::None,
        };
        let dist = DatasetDistribution { spec, seed, loaded: Arc::new(loaded) };
        dist.validate()?;
        Ok(dist)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nominal_size();
        if n < 2 {
            return Err(AuditError::config("data.n", "games need at least two examples"));
        }
        match self.spec {
            DataSpec::LinearRegression { noise_sigma, d, .. } => {
                if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                    return Err(AuditError::config("data.noise_sigma", "must be a non-negative finite number"));
                }
                if d == 0 {
                    return Err(AuditError::config("data.d", "must be at least 1"));
                }
            }
            DataSpec::GaussianBlobs { classes, spread, d, .. } => {
                if classes < 2 {
                    return Err(AuditError::config("data.classes", "must be at least 2"));
                }
                if !(spread >= 0.0 && spread.is_finite()) {
                    return Err(AuditError::config("data.spread", "must be a non-negative finite number"));
                }
                if d == 0 {
                    return Err(AuditError::config("data.d", "must be at least 1"));
                }
            }
            DataSpec::UniformHypercube { n, d, label_mode } => {
                if d == 0 {
                    return Err(AuditError::config("data.d", "must be at least 1"));
                }
                if label_mode == LabelMode::Singleton && d < 64 && (n as u128) > (1u128 << d) {
                    return Err(AuditError::InfeasibleSingleton { n, d });
                }
                if label_mode == LabelMode::KClasses(0) {
                    return Err(AuditError::config("data.label_mode.k_classes", "must be at least 1"));
                }
            }
            DataSpec::CorpusFile { n: Some(k), .. } => {
                if let Loaded::Corpus(c, _) = &*self.loaded {
                    if k > c.sentences.len() {
                        return Err(AuditError::config("data.n", "exceeds the number of sentences in the corpus"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Size of every sampled dataset.
    pub fn nominal_size(&self) -> usize {
        match (&self.spec, &*self.loaded) {
            (DataSpec::CsvFile { train_fraction, .. }, Loaded::Csv(ds)) => {
                ((ds.len() as f64 * train_fraction).round() as usize).clamp(1, ds.len())
            }
            (DataSpec::UniformHypercube { n, .. }, _)
            | (DataSpec::LinearRegression { n, .. }, _)
            | (DataSpec::GaussianBlobs { n, .. }, _) => *n,
            (DataSpec::CorpusFile { n, .. }, Loaded::Corpus(c, _)) => n.unwrap_or(c.sentences.len()),
            _ => 0,
        }
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        match &*self.loaded {
            Loaded::Corpus(_, d) => Some(d),
            _ => None,
        }
    }

    pub fn corpus(&self) -> Option<&Corpus> {
        match &*self.loaded {
            Loaded::Corpus(c, _) => Some(c),
            _ => None,
        }
    }

    /// Draws a training set `S ~ S_n`.
    pub fn sample(&self, rng: &mut GameRng) -> Result<Dataset> {
        match (&self.spec, &*self.loaded) {
            (DataSpec::CsvFile { .. }, Loaded::Csv(ds)) => {
                let k = self.nominal_size();
                let mut idx = sample_indices(rng, ds.len(), k).into_vec();
                idx.sort_unstable();
                let ex = idx.into_iter().map(|i| ds.examples()[i].clone()).collect();
                ds.with_examples(ex)
            }
            (DataSpec::UniformHypercube { n, d, label_mode }, _) => gen_uniform_hypercube(*n, *d, *label_mode, rng),
            (DataSpec::LinearRegression { n, noise_sigma, .. }, Loaded::Weights(w)) => {
                synth::sample_linear(w, *n, *noise_sigma, rng)
            }
            (DataSpec::GaussianBlobs { n, d, classes, spread }, _) => gen_blobs(*n, *d, *classes, *spread, rng),
            (DataSpec::CorpusFile { n, .. }, Loaded::Corpus(c, _)) => {
                let all = c.to_dataset("corpus")?;
                match n {
                    None => Ok(all),
                    Some(k) => {
                        let mut idx = sample_indices(rng, c.sentences.len(), *k).into_vec();
                        idx.sort_unstable();
                        all.with_examples(idx.into_iter().map(|i| all.examples()[i].clone()).collect())
                    }
                }
            }
            _ => unreachable!("distribution state matches its spec"),
        }
    }

    /// Draws one fresh example from the underlying distribution, e.g. for
    /// attacker auxiliary data or the deletion-hiding challenge.
    pub fn sample_example(&self, rng: &mut GameRng) -> Result<Example> {
        Ok(match (&self.spec, &*self.loaded) {
            (DataSpec::CsvFile { .. }, Loaded::Csv(ds)) => ds.examples()[rng.random_range(0..ds.len())].clone(),
            (DataSpec::UniformHypercube { n, d, label_mode }, _) => {
                let mut x = BitVector::zeros(*d);
                for j in 0..*d {
                    x.set(j, rng.random::<bool>());
                }
                let label = match label_mode {
                    LabelMode::Singleton => rng.random_range(1..=*n),
                    LabelMode::KClasses(c) => rng.random_range(0..*c),
                };
                Example::new(Instance::Binary(x), Label::Class(label))
            }
            (DataSpec::LinearRegression { noise_sigma, .. }, Loaded::Weights(w)) => {
                synth::linear_example(w, *noise_sigma, rng)
            }
            (DataSpec::GaussianBlobs { d, classes, spread, .. }, _) => {
                let c = rng.random_range(0..*classes);
                let centers = blob_centers(*d, *classes);
                Example::new(Instance::Dense(synth::blob_point(&centers[c], *spread, rng)), Label::Class(c))
            }
            (DataSpec::CorpusFile { .. }, Loaded::Corpus(c, _)) => {
                let s = &c.sentences[rng.random_range(0..c.sentences.len())];
                Example::new(Instance::Sentence(s.clone()), Label::SequenceProb(1.0))
            }
            _ => unreachable!("distribution state matches its spec"),
        })
    }

    /// Label-space size of sampled datasets, when labels are classes.
    pub fn num_classes(&self) -> Option<usize> {
        match (&self.spec, &*self.loaded) {
            (DataSpec::CsvFile { .. }, Loaded::Csv(ds)) => ds.num_classes(),
            (DataSpec::UniformHypercube { n, label_mode, .. }, _) => Some(match label_mode {
                LabelMode::Singleton => n + 1,
                LabelMode::KClasses(c) => *c,
            }),
            (DataSpec::GaussianBlobs { classes, .. }, _) => Some(*classes),
            _ => None,
        }
    }
}
