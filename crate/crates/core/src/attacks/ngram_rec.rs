//! Sentence reconstruction against N-gram language models.
//!
//! The attacker queries fragment probabilities before and after deletion,
//! keeps the N-grams whose probability fell by more than the global
//! renormalization explains, links them by (N−1)-token overlap and walks
//! the resulting graph from the sentence-start node.

use serde::{Deserialize, Serialize};

use super::{AttackContext, Observation, RecGuess, RecOutput, ReconstructionAttacker};
use crate::error::{AuditError, Result};
use crate::learners::{BOS, EOS};
use crate::oracle::Oracle;
use crate::rng::GameRng;
use crate::types::{Instance, Prediction};

/// How a fragment is judged to have lost occurrences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecreaseRule {
    /// `h_del(g)/h(g)` below the median ratio minus `tau_r`.
    MedianRatio,
    /// `h(g) > h_del(g)`, which also fires on every fragment whose count
    /// merely stayed put while the total shrank.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// Full enumeration when it fits under the query cap, pruning otherwise.
    Auto,
    /// Extend only prefixes that the before-model has seen.
    Always,
    /// Full enumeration; exceeding the cap is an error.
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NGramDiffOptions {
    pub rule: DecreaseRule,
    pub tau_r: f64,
    pub prune: PruneMode,
    /// Largest number of fragment queries full enumeration may issue.
    pub query_cap: u64,
    /// Extra visits allowed per node during path search.
    pub max_repeats: usize,
    /// Node expansions before path search gives up.
    pub expansion_cap: u64,
}

impl Default for NGramDiffOptions {
    fn default() -> Self {
        NGramDiffOptions {
            rule: DecreaseRule::MedianRatio,
            tau_r: 1e-9,
            prune: PruneMode::Auto,
            query_cap: 30_000_000,
            max_repeats: 2,
            expansion_cap: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffNode {
    pub gram: Vec<u32>,
    /// Estimated number of deleted occurrences (1 under the raw rule).
    pub multiplicity: usize,
    pub before: f64,
    pub after: f64,
}

/// Decreased N-grams with their overlap edges. Nodes are sorted by gram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffGraph {
    pub n: usize,
    pub nodes: Vec<DiffNode>,
    pub edges: Vec<(usize, usize)>,
    /// Nodes whose first N−1 tokens are all sentence-start markers.
    pub starts: Vec<usize>,
    pub repeat_budget: usize,
    /// Median of `h_del(g)/h(g)` over fragments with `h(g) > 0` and
    /// `h_del(g) > 0`.
    pub median_ratio: Option<f64>,
}

impl DiffGraph {
    fn build(n: usize, mut nodes: Vec<DiffNode>, repeat_budget: usize, median_ratio: Option<f64>) -> Self {
        nodes.sort_by(|a, b| a.gram.cmp(&b.gram));
        let mut edges = Vec::new();
        if n >= 2 {
            for (i, a) in nodes.iter().enumerate() {
                for (j, b) in nodes.iter().enumerate() {
                    if a.gram[1..] == b.gram[..n - 1] {
                        edges.push((i, j));
                    }
                }
            }
        }
        let starts = nodes
            .iter()
            .enumerate()
            .filter(|(_, v)| n >= 2 && v.gram[..n - 1].iter().all(|&t| t == BOS))
            .map(|(i, _)| i)
            .collect();
        DiffGraph { n, nodes, edges, starts, repeat_budget, median_ratio }
    }

    /// Non-boundary tokens appearing in any node, each once, ascending.
    pub fn bag_of_words(&self) -> Vec<u32> {
        let mut words: Vec<u32> =
            self.nodes.iter().flat_map(|v| v.gram.iter().copied()).filter(|&t| t != BOS && t != EOS).collect();
        words.sort_unstable();
        words.dedup();
        words
    }
}

fn fragment(oracle: &mut Oracle, gram: &[u32]) -> Result<f64> {
    match oracle.query(&Instance::Fragment(gram.to_vec()))? {
        Prediction::SequenceProb(p) => Ok(p),
        other => Err(AuditError::kind_mismatch("sequence probability", other.name())),
    }
}

/// Every fragment of length `n` with positive before-probability, with that
/// probability, in lexicographic order.
fn candidates(before: &mut Oracle, vocab: u32, n: usize, opts: &NGramDiffOptions) -> Result<(Vec<Vec<u32>>, Vec<f64>)> {
    let full = (vocab as u128).pow(n as u32);
    let prune = match opts.prune {
        PruneMode::Always => true,
        PruneMode::Auto => full > opts.query_cap as u128,
        PruneMode::Never if full > opts.query_cap as u128 => {
            return Err(AuditError::DictionaryTooLarge { required: full, cap: opts.query_cap })
        }
        PruneMode::Never => false,
    };
    let mut grams = Vec::new();
    let mut probs = Vec::new();
    if prune {
        // a positive count implies every prefix has a positive count
        let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
        for k in 1..=n {
            let mut next = Vec::new();
            for p in &frontier {
                for t in 0..vocab {
                    let mut g = p.clone();
                    g.push(t);
                    let pr = fragment(before, &g)?;
                    if pr > 0.0 {
                        if k == n {
                            probs.push(pr);
                            grams.push(g);
                        } else {
                            next.push(g);
                        }
                    }
                }
            }
            frontier = next;
        }
    } else {
        let mut g = vec![0u32; n];
        'outer: loop {
            let pr = fragment(before, &g)?;
            if pr > 0.0 {
                grams.push(g.clone());
                probs.push(pr);
            }
            for slot in g.iter_mut().rev() {
                *slot += 1;
                if *slot < vocab {
                    continue 'outer;
                }
                *slot = 0;
            }
            break;
        }
    }
    Ok((grams, probs))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

fn classify(
    grams: Vec<Vec<u32>>,
    before: &[f64],
    after: &mut Oracle,
    n: usize,
    opts: &NGramDiffOptions,
) -> Result<DiffGraph> {
    let after_p = grams.iter().map(|g| fragment(after, g)).collect::<Result<Vec<f64>>>()?;
    // fragments that vanished entirely cannot be undeleted, so they stay
    // out of the median even when they make up most of a tiny corpus
    let m_hat = median(before.iter().zip(&after_p).filter(|(_, a)| **a > 0.0).map(|(b, a)| a / b).collect());
    let mut nodes = Vec::new();
    for ((gram, &b), &a) in grams.into_iter().zip(before).zip(&after_p) {
        let decreased = match (opts.rule, m_hat) {
            (DecreaseRule::Raw, _) => b > a,
            (DecreaseRule::MedianRatio, Some(m)) => a == 0.0 || a / b < m - opts.tau_r,
            (DecreaseRule::MedianRatio, None) => false,
        };
        if decreased {
            nodes.push(DiffNode { gram, multiplicity: 1, before: b, after: a });
        }
    }
    if let (DecreaseRule::MedianRatio, Some(m)) = (opts.rule, m_hat) {
        // the lost mass of each node is proportional to its lost count
        let lost: Vec<f64> = nodes.iter().map(|v| v.before - v.after / m).collect();
        let unit = lost.iter().copied().fold(f64::INFINITY, f64::min);
        if unit > 0.0 {
            for (v, l) in nodes.iter_mut().zip(&lost) {
                v.multiplicity = ((l / unit).round() as usize).max(1);
            }
        }
    }
    Ok(DiffGraph::build(n, nodes, opts.max_repeats, m_hat))
}

/// Builds the diff graph for order-`n` models over token ids `0..vocab`.
pub fn ngram_diff(
    before: &mut Oracle,
    after: &mut Oracle,
    vocab: u32,
    n: usize,
    opts: &NGramDiffOptions,
) -> Result<DiffGraph> {
    let (grams, probs) = candidates(before, vocab, n, opts)?;
    before.revoke();
    classify(grams, &probs, after, n, opts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathSearchError {
    /// Unigram graphs carry no order information.
    NoEdges,
    NoCoveringPath,
    BudgetExceeded(u64),
}

impl From<PathSearchError> for AuditError {
    fn from(e: PathSearchError) -> Self {
        match e {
            PathSearchError::BudgetExceeded(cap) => AuditError::SearchBudgetExceeded(cap),
            PathSearchError::NoEdges => AuditError::InvalidArgument("unigram diff graph has no edges".into()),
            PathSearchError::NoCoveringPath => AuditError::InvalidArgument("no covering path in diff graph".into()),
        }
    }
}

struct Search<'a> {
    graph: &'a DiffGraph,
    succ: Vec<Vec<usize>>,
    visits: Vec<usize>,
    cap: Vec<usize>,
    deficit: usize,
    path: Vec<usize>,
    expansions: u64,
    budget: u64,
}

impl Search<'_> {
    fn dfs(&mut self, v: usize, remaining: usize) -> std::result::Result<bool, PathSearchError> {
        self.expansions += 1;
        if self.expansions > self.budget {
            return Err(PathSearchError::BudgetExceeded(self.budget));
        }
        if remaining == 0 {
            return Ok(self.deficit == 0 && self.graph.nodes[v].gram.last() == Some(&EOS));
        }
        for s in 0..self.succ[v].len() {
            let w = self.succ[v][s];
            if self.visits[w] >= self.cap[w] {
                continue;
            }
            let fills = self.visits[w] < self.graph.nodes[w].multiplicity;
            let deficit = self.deficit - fills as usize;
            if deficit > remaining - 1 {
                continue;
            }
            self.visits[w] += 1;
            self.deficit = deficit;
            self.path.push(w);
            if self.dfs(w, remaining - 1)? {
                return Ok(true);
            }
            self.path.pop();
            self.deficit += fills as usize;
            self.visits[w] -= 1;
        }
        Ok(false)
    }
}

/// Shortest walk from a start node to an end-of-sentence node that visits
/// every node at least its multiplicity and at most multiplicity plus
/// `max_repeats` times. Among the shortest, the lexicographically smallest
/// token sequence wins. Boundary markers are stripped from the result.
pub fn ngram_path_search(
    graph: &DiffGraph,
    max_repeats: usize,
    expansion_cap: u64,
) -> std::result::Result<Vec<u32>, PathSearchError> {
    if graph.n < 2 {
        return Err(PathSearchError::NoEdges);
    }
    if graph.nodes.is_empty() {
        return Err(PathSearchError::NoCoveringPath);
    }
    let k = graph.nodes.len();
    let mut succ = vec![Vec::new(); k];
    for &(a, b) in &graph.edges {
        succ[a].push(b);
    }
    for s in &mut succ {
        s.sort_unstable();
    }
    let base: usize = graph.nodes.iter().map(|v| v.multiplicity).sum();
    let mut search = Search {
        graph,
        succ,
        visits: vec![0; k],
        cap: graph.nodes.iter().map(|v| v.multiplicity + max_repeats).collect(),
        deficit: base,
        path: Vec::new(),
        expansions: 0,
        budget: expansion_cap,
    };
    for extra in 0..=max_repeats * k {
        let len = base + extra;
        for &s in &graph.starts {
            search.visits.iter_mut().for_each(|c| *c = 0);
            search.visits[s] = 1;
            search.deficit = base - 1;
            search.path = vec![s];
            if search.dfs(s, len - 1)? {
                return Ok(tokens(graph, &search.path));
            }
        }
    }
    Err(PathSearchError::NoCoveringPath)
}

fn tokens(graph: &DiffGraph, path: &[usize]) -> Vec<u32> {
    let mut seq = graph.nodes[path[0]].gram.clone();
    for &v in &path[1..] {
        seq.push(*graph.nodes[v].gram.last().expect("non-empty gram"));
    }
    seq.retain(|&t| t != BOS && t != EOS);
    seq
}

/// The full attack: diff graph, path search, and a bag-of-words fallback.
#[derive(Clone, Debug)]
pub struct NGramRec {
    pub n: usize,
    pub options: NGramDiffOptions,
}

impl NGramRec {
    /// Path-search output, or the bag of words when the search fails.
    pub fn reconstruct_from(&self, graph: &DiffGraph) -> RecOutput {
        match ngram_path_search(graph, self.options.max_repeats, self.options.expansion_cap) {
            Ok(seq) => RecOutput::new(RecGuess::Sequence(seq)),
            Err(PathSearchError::NoEdges) => RecOutput::new(RecGuess::Sequence(graph.bag_of_words())),
            Err(_) => RecOutput { guess: RecGuess::Sequence(graph.bag_of_words()), degenerate: true },
        }
    }
}

impl ReconstructionAttacker for NGramRec {
    fn name(&self) -> String {
        format!("ngram_rec[n={}]", self.n)
    }

    fn observe(&self, ctx: &AttackContext, before: &mut Oracle, _: &mut GameRng) -> Result<Observation> {
        let vocab = ctx.vocab_size.ok_or_else(|| AuditError::config("data", "sentence reconstruction needs a dictionary"))?;
        let (sequences, scalars) = candidates(before, vocab as u32, self.n, &self.options)?;
        Ok(Observation { sequences, scalars, ..Default::default() })
    }

    fn reconstruct(&self, _: &AttackContext, obs: Observation, after: &mut Oracle, _: &mut GameRng) -> Result<RecOutput> {
        let graph = classify(obs.sequences, &obs.scalars, after, self.n, &self.options)?;
        Ok(self.reconstruct_from(&graph))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_corpus;
    use crate::learners::{train, LearnerSpec, Model};
    use crate::oracle::Phase;

    /// Diff graph for deleting sentence `target` from the corpus `text`.
    fn diff(text: &str, target: usize, n: usize, opts: &NGramDiffOptions) -> (DiffGraph, crate::data::Dictionary) {
        let (corpus, dict) = parse_corpus(text).unwrap();
        let ds = corpus.to_dataset("t").unwrap();
        let spec = LearnerSpec::NGram { n };
        let h = train(&spec, &ds, 0).unwrap();
        let h_del = train(&spec, &ds.without(&[target]).unwrap(), 1).unwrap();
        let mut b = Oracle::new(&h, Phase::BeforeDeletion);
        let mut a = Oracle::new(&h_del, Phase::AfterDeletion);
        let g = ngram_diff(&mut b, &mut a, dict.len() as u32, n, opts).unwrap();
        (g, dict)
    }

    fn words(dict: &crate::data::Dictionary, g: &[u32]) -> Vec<String> {
        g.iter().map(|&t| dict.word(t).unwrap().to_string()).collect()
    }

    #[test]
    fn two_sentence_bigram_chain() {
        let (g, dict) = diff("the cat sat\na dog ran\n", 0, 2, &NGramDiffOptions::default());
        let nodes: Vec<Vec<String>> = g.nodes.iter().map(|v| words(&dict, &v.gram)).collect();
        let want = [["<s>", "the"], ["the", "cat"], ["cat", "sat"], ["sat", "</s>"]];
        assert_eq!(nodes.len(), 4);
        for w in want {
            assert!(nodes.contains(&w.iter().map(|s| s.to_string()).collect()));
        }
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.starts.len(), 1);
        assert_eq!(words(&dict, &g.nodes[g.starts[0]].gram), ["<s>", "the"]);
        let seq = ngram_path_search(&g, 0, 1000).unwrap();
        assert_eq!(dict.decode(&seq), "the cat sat");
    }

    #[test]
    fn undeleted_grams_share_the_median_ratio() {
        // C_2 = 8 before, 4 after: every surviving bigram doubles
        let (g, _) = diff("the cat sat\na dog ran\n", 0, 2, &NGramDiffOptions::default());
        assert!((g.median_ratio.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn raw_rule_is_confounded_by_renormalization() {
        let opts = NGramDiffOptions { rule: DecreaseRule::Raw, ..Default::default() };
        let (g, _) = diff("the cat sat\nthe dog ran\n", 0, 2, &opts);
        // (<s>, the) loses one of two occurrences but stays at 1/4
        assert_eq!(g.nodes.len(), 3);
        let (g, _) = diff("the cat sat\nthe dog ran\n", 0, 2, &NGramDiffOptions::default());
        assert_eq!(g.nodes.len(), 4);
    }

    #[test]
    fn identical_models_give_an_empty_graph() {
        let (corpus, dict) = parse_corpus("the cat sat\na dog ran\n").unwrap();
        let h = train(&LearnerSpec::NGram { n: 2 }, &corpus.to_dataset("t").unwrap(), 0).unwrap();
        let mut b = Oracle::new(&h, Phase::BeforeDeletion);
        let mut a = Oracle::new(&h, Phase::AfterDeletion);
        let g = ngram_diff(&mut b, &mut a, dict.len() as u32, 2, &NGramDiffOptions::default()).unwrap();
        assert!(g.nodes.is_empty());
    }

    #[test]
    fn repeated_bigram_is_recovered_through_its_multiplicity() {
        let (mut g, dict) = diff("a a a\nb c\n", 0, 2, &NGramDiffOptions::default());
        let aa = g.nodes.iter().find(|v| words(&dict, &v.gram) == ["a", "a"]).unwrap();
        assert_eq!(aa.multiplicity, 2);
        assert_eq!(dict.decode(&ngram_path_search(&g, 0, 1000).unwrap()), "a a a");

        // visiting each node once already covers the graph, with a shorter sentence
        g.nodes.iter_mut().for_each(|v| v.multiplicity = 1);
        assert_eq!(dict.decode(&ngram_path_search(&g, 1, 1000).unwrap()), "a a");
    }

    #[test]
    fn unigram_falls_back_to_a_bag() {
        let (g, dict) = diff("the cat sat\na dog ran\n", 0, 1, &NGramDiffOptions::default());
        assert!(g.edges.is_empty());
        assert_eq!(ngram_path_search(&g, 2, 1000), Err(PathSearchError::NoEdges));
        let rec = NGramRec { n: 1, options: NGramDiffOptions::default() };
        let RecGuess::Sequence(bag) = rec.reconstruct_from(&g).guess else { panic!() };
        let mut w = words(&dict, &bag);
        w.sort();
        assert_eq!(w, ["cat", "sat", "the"]);
    }

    #[test]
    fn pruning_matches_full_enumeration() {
        let text = "the cat sat on the mat\nthe dog sat\na cat ran on a mat\n";
        let full = NGramDiffOptions { prune: PruneMode::Never, ..Default::default() };
        let pruned = NGramDiffOptions { prune: PruneMode::Always, ..Default::default() };
        for n in 1..=3 {
            assert_eq!(diff(text, 0, n, &full).0, diff(text, 0, n, &pruned).0);
        }
    }

    #[test]
    fn full_enumeration_respects_the_cap() {
        let (corpus, dict) = parse_corpus("the cat sat\n").unwrap();
        let h = train(&LearnerSpec::NGram { n: 3 }, &corpus.to_dataset("t").unwrap(), 0).unwrap();
        let mut b = Oracle::new(&h, Phase::BeforeDeletion);
        let mut a = Oracle::new(&h, Phase::AfterDeletion);
        let opts = NGramDiffOptions { prune: PruneMode::Never, query_cap: 10, ..Default::default() };
        let err = ngram_diff(&mut b, &mut a, dict.len() as u32, 3, &opts).unwrap_err();
        assert!(matches!(err, AuditError::DictionaryTooLarge { .. }));
        assert!(matches!(h, Model::NGram(_)));
    }

    #[test]
    fn full_enumeration_query_count() {
        let (corpus, dict) = parse_corpus("the cat sat\n").unwrap();
        let h = train(&LearnerSpec::NGram { n: 2 }, &corpus.to_dataset("t").unwrap(), 0).unwrap();
        let mut b = Oracle::new(&h, Phase::BeforeDeletion);
        let mut a = Oracle::new(&h, Phase::AfterDeletion);
        let opts = NGramDiffOptions { prune: PruneMode::Never, ..Default::default() };
        ngram_diff(&mut b, &mut a, dict.len() as u32, 2, &opts).unwrap();
        let v = dict.len() as u64;
        assert_eq!(b.query_count(), v * v);
        assert!(a.query_count() <= v * v);
    }
}
