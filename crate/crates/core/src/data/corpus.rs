use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::learners::{BOS, EOS};
use crate::types::{Dataset, Example, Instance, Label};

/// Template-generated English-like corpus shipped with the crate.
pub const BUNDLED_CORPUS: &str = include_str!("../../data/corpus.txt");

/// Word ↔ id mapping. Ids 0 and 1 are the sentence boundary markers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dictionary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Dictionary {
    fn new() -> Self {
        let mut d = Dictionary { words: Vec::new(), index: HashMap::new() };
        d.intern("<s>");
        d.intern("</s>");
        d
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.index.insert(w.to_string(), id);
        id
    }

    /// Number of entries including both boundary markers.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// All token ids in ascending order.
    pub fn ids(&self) -> std::ops::Range<u32> {
        0..self.words.len() as u32
    }

    pub fn decode(&self, tokens: &[u32]) -> String {
        tokens.iter().map(|&t| self.word(t).unwrap_or("<unk>")).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Vec<u32>>,
    pub token_count: usize,
    /// Distinct words, boundary markers excluded.
    pub unique_words: usize,
}

impl Corpus {
    /// One example per sentence, labelled with probability 1.
    pub fn to_dataset(&self, provenance: &str) -> Result<Dataset> {
        let ex = self
            .sentences
            .iter()
            .map(|s| Example::new(Instance::Sentence(s.clone()), Label::SequenceProb(1.0)))
            .collect();
        Dataset::new(ex, provenance)
    }
}

/// Lowercases and splits on whitespace, one sentence per non-blank line.
pub fn parse_corpus(text: &str) -> Result<(Corpus, Dictionary)> {
    let mut dict = Dictionary::new();
    let mut sentences = Vec::new();
    let mut token_count = 0;
    for line in text.lines() {
        let toks: Vec<u32> = line.split_whitespace().map(|w| dict.intern(&w.to_lowercase())).collect();
        if toks.is_empty() {
            continue;
        }
        token_count += toks.len();
        sentences.push(toks);
    }
    if sentences.is_empty() {
        return Err(AuditError::EmptyCorpus);
    }
    debug_assert!(dict.id("<s>") == Some(BOS) && dict.id("</s>") == Some(EOS));
    let unique_words = dict.len() - 2;
    Ok((Corpus { sentences, token_count, unique_words }, dict))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, Dictionary)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))?;
    parse_corpus(&text)
}

pub fn bundled_corpus() -> (Corpus, Dictionary) {
    parse_corpus(BUNDLED_CORPUS).expect("bundled corpus is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_file() {
        let (c, d) = parse_corpus("The cat\na dog\n").unwrap();
        assert_eq!(c.unique_words, 4);
        assert_eq!(d.len(), 6);
        assert_eq!(c.sentences, vec![vec![2, 3], vec![4, 5]]);
        assert_eq!(d.decode(&c.sentences[0]), "the cat");
    }

    #[test]
    fn blank_input_is_rejected() {
        assert_eq!(parse_corpus(" \n\n").unwrap_err(), AuditError::EmptyCorpus);
    }

    #[test]
    fn bundled_corpus_fits_the_query_budget() {
        let (c, d) = bundled_corpus();
        assert!(c.sentences.len() >= 200);
        assert!(c.unique_words <= 300);
        assert!((d.len() as u64).pow(3) <= 30_000_000);
        assert!(c.sentences.iter().all(|s| (4..=12).contains(&s.len())));
    }
}
