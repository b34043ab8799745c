use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{Dataset, Instance};

/// Sentence start marker.
pub const BOS: u32 = 0;
/// Sentence end marker.
pub const EOS: u32 = 1;

const TOKEN_BITS: u32 = 21;
const MAX_TOKEN: u32 = (1 << TOKEN_BITS) - 1;

/// Keys are already well mixed by construction; one multiply is enough.
#[derive(Default, Clone, Copy)]
pub struct PackedHasher(u64);

impl Hasher for PackedHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = (self.0 ^ *b as u64).wrapping_mul(0x100_0000_01B3);
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = (v ^ (v >> 29)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    }
}

type Table = HashMap<u64, u64, BuildHasherDefault<PackedHasher>>;

/// Packs up to three token ids into one key. Token ids are offset by one so
/// that grams of different lengths never collide.
pub(crate) fn pack(gram: &[u32]) -> Result<u64> {
    let mut k = 0u64;
    for &t in gram {
        if t >= MAX_TOKEN {
            return Err(AuditError::InvalidArgument(format!("token id {t} exceeds {}", MAX_TOKEN - 1)));
        }
        k = (k << TOKEN_BITS) | (t as u64 + 1);
    }
    Ok(k)
}

/// Unsmoothed maximum-likelihood N-gram model over boundary-padded
/// sentences: `N−1` copies of [`BOS`] in front, one [`EOS`] at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramModel {
    pub n: usize,
    /// `counts[k-1]` maps packed k-grams to their counts, for k in 1..=n.
    counts: Vec<Table>,
    /// `totals[k-1]` is the number of k-gram windows in the corpus.
    totals: Vec<u64>,
    /// Context counts `Σ_w c(p, w)` for every observed (n−1)-gram `p`.
    contexts: Table,
}

impl NGramModel {
    pub fn fit(dataset: &Dataset, n: usize) -> Result<NGramModel> {
        if !(1..=3).contains(&n) {
            return Err(AuditError::config("learner.n", "must be 1, 2 or 3"));
        }
        let mut counts = vec![Table::default(); n];
        let mut totals = vec![0u64; n];
        let mut contexts = Table::default();
        let mut padded = Vec::new();
        for e in dataset.examples() {
            let Instance::Sentence(tokens) = &e.instance else {
                return Err(AuditError::kind_mismatch("sentence", e.instance.kind().to_string()));
            };
            padded.clear();
            padded.extend(std::iter::repeat_n(BOS, n - 1));
            padded.extend_from_slice(tokens);
            padded.push(EOS);
            for k in 1..=n {
                for w in padded.windows(k) {
                    *counts[k - 1].entry(pack(w)?).or_insert(0) += 1;
                    totals[k - 1] += 1;
                }
            }
            for w in padded.windows(n) {
                *contexts.entry(pack(&w[..n - 1])?).or_insert(0) += 1;
            }
        }
        Ok(NGramModel {
            n,
            counts,
            totals,
            contexts,
        })
    }

    /// Raw count of a gram of length 1..=n.
    pub fn count(&self, gram: &[u32]) -> u64 {
        if gram.is_empty() || gram.len() > self.n {
            return 0;
        }
        match pack(gram) {
            Ok(k) => self.counts[gram.len() - 1].get(&k).copied().unwrap_or(0),
            Err(_) => 0,
        }
    }

    pub fn total(&self, order: usize) -> u64 {
        self.totals.get(order.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// Number of windows with the given (n−1)-token prefix.
    pub fn context_count(&self, prefix: &[u32]) -> u64 {
        match pack(prefix) {
            Ok(k) => self.contexts.get(&k).copied().unwrap_or(0),
            Err(_) => 0,
        }
    }

    /// Observed (n−1)-gram prefixes with their context counts, unpacked.
    pub fn observed_contexts(&self) -> Vec<(Vec<u32>, u64)> {
        let mut v: Vec<(Vec<u32>, u64)> = self
            .contexts
            .iter()
            .map(|(&k, &c)| (unpack(k, self.n - 1), c))
            .collect();
        v.sort();
        v
    }

    /// Observed k-grams with their counts, unpacked and sorted.
    pub fn observed(&self, order: usize) -> Vec<(Vec<u32>, u64)> {
        let mut v: Vec<(Vec<u32>, u64)> = self.counts[order - 1]
            .iter()
            .map(|(&k, &c)| (unpack(k, order), c))
            .collect();
        v.sort();
        v
    }

    /// Chain-rule probability of a full sentence, or `c(g)/C_len` for a
    /// fragment of length 1..=n.
    pub fn sequence_probability(&self, seq: &Instance) -> Result<f64> {
        match seq {
            Instance::Sentence(tokens) => {
                let mut padded = vec![BOS; self.n - 1];
                padded.extend_from_slice(tokens);
                padded.push(EOS);
                let mut p = 1.0;
                for w in padded.windows(self.n) {
                    let num = self.count(w);
                    if num == 0 {
                        return Ok(0.0);
                    }
                    let den = if self.n == 1 { self.total(1) } else { self.context_count(&w[..self.n - 1]) };
                    p *= num as f64 / den as f64;
                }
                Ok(p)
            }
            Instance::Fragment(g) => {
                if g.is_empty() || g.len() > self.n {
                    return Err(AuditError::FragmentLengthMismatch {
                        order: self.n,
                        found: g.len(),
                    });
                }
                let total = self.total(g.len());
                Ok(if total == 0 { 0.0 } else { self.count(g) as f64 / total as f64 })
            }
            other => Err(AuditError::kind_mismatch("token sequence", other.kind().to_string())),
        }
    }
}

fn unpack(mut key: u64, len: usize) -> Vec<u32> {
    let mut out = vec![0u32; len];
    for slot in out.iter_mut().rev() {
        *slot = (key & MAX_TOKEN as u64) as u32 - 1;
        key >>= TOKEN_BITS;
    }
    out
}
