use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{BitVector, Dataset, Instance, Label, Prediction};

/// k-nearest-neighbour model holding its own copy of the training set.
///
/// Distances are Hamming for binary instances and squared Euclidean for
/// dense ones. Neighbours are ranked by `(distance, stored index)`, so a
/// 1-NN query equidistant from several points answers with the smallest
/// index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Instance>,
    pub labels: Vec<Label>,
    pub num_classes: Option<usize>,
}

impl KnnModel {
    pub fn fit(dataset: &Dataset, k: usize) -> Result<KnnModel> {
        Ok(KnnModel {
            k,
            points: dataset.examples().iter().map(|e| e.instance.clone()).collect(),
            labels: dataset.examples().iter().map(|e| e.label).collect(),
            num_classes: dataset.num_classes(),
        })
    }

    fn distance(a: &Instance, b: &Instance) -> Result<f64> {
        match (a, b) {
            (Instance::Binary(x), Instance::Binary(y)) if x.len() == y.len() => Ok(x.hamming(y) as f64),
            (Instance::Dense(x), Instance::Dense(y)) if x.len() == y.len() => {
                Ok(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum())
            }
            _ => Err(AuditError::kind_mismatch(
                format!("{} instance of dimension {}", b.kind(), b.dim()),
                format!("{} instance of dimension {}", a.kind(), a.dim()),
            )),
        }
    }

    /// Indices of the `k` nearest stored points, nearest first.
    pub fn neighbours(&self, query: &Instance) -> Result<Vec<usize>> {
        let mut ranked = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            ranked.push((Self::distance(query, p)?, i));
        }
        let k = self.k.min(ranked.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < ranked.len() {
            ranked.select_nth_unstable_by(k - 1, cmp);
            ranked.truncate(k);
        }
        ranked.sort_unstable_by(cmp);
        Ok(ranked.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let nb = self.neighbours(instance)?;
        let share = 1.0 / nb.len() as f64;
        match self.labels[0] {
            Label::Class(_) => {
                // integer votes keep unanimous neighbourhoods at exactly 1.0
                let mut votes = vec![0usize; self.num_classes.unwrap_or(1)];
                for i in &nb {
                    if let Label::Class(c) = self.labels[*i] {
                        votes[c] += 1;
                    }
                }
                Ok(Prediction::ClassDistribution(votes.iter().map(|&v| v as f64 / nb.len() as f64).collect()))
            }
            _ => {
                let mean = nb
                    .iter()
                    .map(|&i| match self.labels[i] {
                        Label::Real(v) | Label::SequenceProb(v) => v,
                        Label::Class(c) => c as f64,
                    })
                    .sum::<f64>()
                    * share;
                Ok(Prediction::RealValue(mean))
            }
        }
    }
}

/// For stored binary points `x_0..x_{n-1}`, the fraction of the Voronoi
/// cell of each `x_i` whose coordinate `j` agrees with `x_i[j]`, indexed
/// `[i][j]`. Cells follow 1-NN with smallest-index tie-breaking; the cube
/// is enumerated exhaustively, so `d` is limited to 24.
pub fn voronoi_agreement(points: &[BitVector]) -> Result<Vec<Vec<f64>>> {
    let d = points.first().ok_or(AuditError::EmptyDataset)?.len();
    if d > 24 {
        return Err(AuditError::InvalidArgument(format!("enumerating {{0,1}}^{d} is too large")));
    }
    let model = KnnModel {
        k: 1,
        points: points.iter().cloned().map(Instance::Binary).collect(),
        labels: (0..points.len()).map(Label::Class).collect(),
        num_classes: Some(points.len()),
    };
    let mut agree = vec![vec![0u64; d]; points.len()];
    let mut size = vec![0u64; points.len()];
    for v in 0..1u64 << d {
        let x = BitVector::from_u64(v, d);
        let i = model.neighbours(&Instance::Binary(x.clone()))?[0];
        size[i] += 1;
        for (j, a) in agree[i].iter_mut().enumerate() {
            *a += (x.get(j) == points[i].get(j)) as u64;
        }
    }
    Ok(agree
        .iter()
        .zip(&size)
        .map(|(row, &n)| row.iter().map(|&a| if n == 0 { 1.0 } else { a as f64 / n as f64 }).collect())
        .collect())
}
