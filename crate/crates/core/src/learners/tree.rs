use serde::{Deserialize, Serialize};

use super::vector_features;
use crate::error::{AuditError, Result};
use crate::types::{Dataset, Instance, Label, Prediction};

/// Split criterion, picked from the label kind at training time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Class labels.
    Gini,
    /// Real labels: variance reduction, leaves predict the mean.
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        distribution: Vec<f64>,
        mean: f64,
        samples: usize,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        impurity: f64,
        child_impurity: f64,
    },
}

/// Unbounded CART tree stored as an arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub criterion: Criterion,
    pub nodes: Vec<TreeNode>,
    pub dim: usize,
    pub num_classes: usize,
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    classes: Option<&'a [usize]>,
    num_classes: usize,
    nodes: Vec<TreeNode>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    /// Impurity of a set, weighted by its size.
    fn weighted_impurity(&self, idx: &[usize]) -> f64 {
        match self.classes {
            Some(cl) => {
                let mut counts = vec![0usize; self.num_classes];
                idx.iter().for_each(|&i| counts[cl[i]] += 1);
                gini_weighted(&counts, idx.len())
            }
            None => {
                let (s, s2) = idx.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.ys[i], b + self.ys[i] * self.ys[i]));
                (s2 - s * s / idx.len() as f64).max(0.0)
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.classes {
            Some(cl) => idx.iter().all(|&i| cl[i] == cl[idx[0]]),
            None => idx.iter().all(|&i| self.ys[i] == self.ys[idx[0]]),
        }
    }

    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut distribution = Vec::new();
        let mut mean = 0.0;
        match self.classes {
            Some(cl) => {
                let mut counts = vec![0usize; self.num_classes];
                idx.iter().for_each(|&i| counts[cl[i]] += 1);
                distribution = counts.iter().map(|&c| c as f64 / idx.len() as f64).collect();
            }
            None => mean = idx.iter().map(|&i| self.ys[i]).sum::<f64>() / idx.len() as f64,
        }
        self.nodes.push(TreeNode::Leaf {
            distribution,
            mean,
            samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    /// Lowest weighted child impurity over all midpoints. Strict improvement
    /// in scan order means ties go to the lowest feature, then the lowest
    /// threshold.
    fn best_split(&self, idx: &[usize]) -> Option<Best> {
        let d = self.xs[0].len();
        let n = idx.len();
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            match self.classes {
                Some(cl) => {
                    let mut left = vec![0usize; self.num_classes];
                    let mut right = vec![0usize; self.num_classes];
                    order.iter().for_each(|&i| right[cl[i]] += 1);
                    for pos in 0..n - 1 {
                        let i = order[pos];
                        left[cl[i]] += 1;
                        right[cl[i]] -= 1;
                        let (a, b) = (self.xs[i][f], self.xs[order[pos + 1]][f]);
                        if a == b {
                            continue;
                        }
                        let score = gini_weighted(&left, pos + 1) + gini_weighted(&right, n - pos - 1);
                        if best.as_ref().is_none_or(|bst| score < bst.score) {
                            best = Some(Best { feature: f, threshold: midpoint(a, b), score });
                        }
                    }
                }
                None => {
                    let (mut ls, mut ls2) = (0.0, 0.0);
                    let (ts, ts2) = order.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.ys[i], b + self.ys[i] * self.ys[i]));
                    for pos in 0..n - 1 {
                        let i = order[pos];
                        ls += self.ys[i];
                        ls2 += self.ys[i] * self.ys[i];
                        let (a, b) = (self.xs[i][f], self.xs[order[pos + 1]][f]);
                        if a == b {
                            continue;
                        }
                        let nl = (pos + 1) as f64;
                        let nr = (n - pos - 1) as f64;
                        let (rs, rs2) = (ts - ls, ts2 - ls2);
                        let score = (ls2 - ls * ls / nl).max(0.0) + (rs2 - rs * rs / nr).max(0.0);
                        if best.as_ref().is_none_or(|bst| score < bst.score) {
                            best = Some(Best { feature: f, threshold: midpoint(a, b), score });
                        }
                    }
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        if self.is_pure(&idx) {
            return self.leaf(&idx);
        }
        let Some(best) = self.best_split(&idx) else {
            // identical instances with different labels
            return self.leaf(&idx);
        };
        let n = idx.len() as f64;
        let impurity = self.weighted_impurity(&idx) / n;
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.xs[i][best.feature] <= best.threshold);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            distribution: Vec::new(),
            mean: 0.0,
            samples: 0,
        });
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[slot] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            impurity,
            child_impurity: best.score / n,
        };
        slot
    }
}

/// `n·gini` for a node with the given class counts.
fn gini_weighted(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // keep `a <= m < b` even when a and b are adjacent floats
    if m < b {
        m
    } else {
        a
    }
}

impl TreeModel {
    pub fn fit(dataset: &Dataset) -> Result<TreeModel> {
        let mut xs = Vec::with_capacity(dataset.len());
        let mut ys = Vec::with_capacity(dataset.len());
        let mut cls = Vec::with_capacity(dataset.len());
        for e in dataset.examples() {
            xs.push(e.instance.features()?.into_owned());
            match e.label {
                Label::Class(c) => cls.push(c),
                Label::Real(y) => ys.push(y),
                ref other => return Err(AuditError::kind_mismatch("class or real label", other.name())),
            }
        }
        let criterion = if cls.len() == xs.len() { Criterion::Gini } else { Criterion::Mse };
        let num_classes = if criterion == Criterion::Gini { dataset.num_classes().unwrap_or(1) } else { 0 };
        let mut b = Builder {
            xs: &xs,
            ys: &ys,
            classes: (criterion == Criterion::Gini).then_some(cls.as_slice()),
            num_classes,
            nodes: Vec::new(),
        };
        b.grow((0..xs.len()).collect());
        Ok(TreeModel {
            criterion,
            nodes: b.nodes,
            dim: xs[0].len(),
            num_classes,
        })
    }

    fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let x = vector_features(instance, self.dim)?;
        match self.leaf_for(&x) {
            TreeNode::Leaf { distribution, mean, .. } => Ok(match self.criterion {
                Criterion::Gini => Prediction::ClassDistribution(distribution.clone()),
                Criterion::Mse => Prediction::RealValue(*mean),
            }),
            TreeNode::Split { .. } => unreachable!("leaf_for always stops at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}
