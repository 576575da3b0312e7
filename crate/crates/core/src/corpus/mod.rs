//! Bag-of-words corpus pipeline.
//!
//! Raw text is tokenized into lowercase alphabetic runs, a document-frequency
//! vocabulary is built from the training documents, and each document becomes
//! a sparse row of weights in `[0, 1]` so it can be reconstructed through a
//! sigmoid output layer.

mod archive;
mod newsgroups;
pub mod synthetic;

pub use archive::{read_archive, write_archive, ArchiveMeta, CorpusArchive};
pub use newsgroups::{load_20newsgroups, read_stopwords, LoadedCorpus};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty vocabulary: every token was filtered out")]
    EmptyVocabulary,
    #[error("no documents to build a vocabulary from")]
    NoDocuments,
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("corpus path {0} does not exist")]
    MissingPath(String),
    #[error("class directory {0} contains no readable documents")]
    EmptyClass(String),
    #[error("malformed corpus archive: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How in-document counts become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `log(1 + tf) / log(1 + max_tf)`.
    #[default]
    LogNormalizedTf,
    /// 1 if present.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub max_vocab: usize,
    pub min_doc_freq: u32,
    pub stopwords: Option<BTreeSet<String>>,
    pub weighting: Weighting,
    pub split_seed: u64,
    pub test_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            max_vocab: 2000,
            min_doc_freq: 3,
            stopwords: None,
            weighting: Weighting::LogNormalizedTf,
            split_seed: 0,
            test_fraction: 0.2,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_vocab < 1 {
            return Err(CorpusError::InvalidConfig("max_vocab must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CorpusError::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Lowercased maximal alphabetic runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|run| run.chars().nth(1).is_some())
        .map(str::to_lowercase)
        .collect()
}

/// Token ↔ index map ordered by descending document frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    index_of: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from already ordered tokens.
    pub fn from_tokens(tokens: Vec<String>, doc_freq: Vec<u32>) -> Result<Self, CorpusError> {
        if tokens.len() != doc_freq.len() {
            return Err(CorpusError::Format(format!(
                "{} tokens but {} document frequencies",
                tokens.len(),
                doc_freq.len()
            )));
        }
        let index_of: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index_of.len() != tokens.len() {
            return Err(CorpusError::Format("duplicate vocabulary token".into()));
        }
        Ok(Vocabulary {
            tokens,
            doc_freq,
            index_of,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[u32] {
        &self.doc_freq
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index_of.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }
}

/// Counts document frequencies and keeps the `max_vocab` most frequent tokens
/// passing the `min_doc_freq` and stopword filters.
pub fn build_vocab<S: AsRef<str>>(docs: &[Vec<S>], cfg: &CorpusConfig) -> Result<Vocabulary, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::NoDocuments);
    }
    let mut df: HashMap<&str, u32> = HashMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for token in unique {
            *df.entry(token).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u32)> = df
        .into_iter()
        .filter(|&(t, n)| n >= cfg.min_doc_freq && !cfg.stopwords.as_ref().is_some_and(|s| s.contains(t)))
        .collect();
    if kept.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(cfg.max_vocab);
    let (tokens, doc_freq) = kept.into_iter().map(|(t, n)| (t.to_string(), n)).unzip();
    Vocabulary::from_tokens(tokens, doc_freq)
}

/// Sparse document vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseRow {
    pub fn new(indices: Vec<u32>, values: Vec<f32>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        SparseRow { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self, width: usize) -> Vec<f32> {
        let mut dense = vec![0.0; width];
        for (i, v) in self.iter() {
            dense[i as usize] = v;
        }
        dense
    }
}

/// Maps one tokenized document onto the vocabulary. Out-of-vocabulary tokens
/// are ignored.
pub fn vectorize<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary, weighting: Weighting) -> SparseRow {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for token in doc {
        if let Some(i) = vocab.index_of(token.as_ref()) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let mut counts: Vec<(u32, u32)> = counts.into_iter().collect();
    counts.sort_unstable();
    let max_tf = counts.iter().map(|&(_, n)| n).max().unwrap_or(0);
    let denom = (max_tf as f64).ln_1p();
    let (indices, values) = counts
        .into_iter()
        .map(|(i, tf)| {
            let w = match weighting {
                Weighting::Binary => 1.0,
                Weighting::LogNormalizedTf if tf == max_tf => 1.0,
                Weighting::LogNormalizedTf => ((tf as f64).ln_1p() / denom) as f32,
            };
            (i, w)
        })
        .unzip();
    SparseRow { indices, values }
}

/// Rows of normalized term weights with optional labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DocMatrix {
    pub cols: usize,
    pub rows: Vec<SparseRow>,
    pub labels: Vec<Option<u32>>,
    pub doc_ids: Vec<String>,
}

impl DocMatrix {
    pub fn new(cols: usize) -> Self {
        DocMatrix {
            cols,
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: SparseRow, label: Option<u32>, doc_id: impl Into<String>) {
        self.rows.push(row);
        self.labels.push(label);
        self.doc_ids.push(doc_id.into());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Labels as dense class ids, or `None` if any row is unlabeled.
    pub fn dense_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().map(|l| l.map(|l| l as usize)).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DocMatrix {
        let mut out = DocMatrix::new(self.cols);
        for &i in indices {
            out.push(self.rows[i].clone(), self.labels[i], self.doc_ids[i].clone());
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &DocMatrix) -> DocMatrix {
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        out.labels.extend(other.labels.iter().copied());
        out.doc_ids.extend(other.doc_ids.iter().cloned());
        out
    }

    /// Checks the weight range, index ordering and bounds of every row.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.labels.len() != self.rows.len() || self.doc_ids.len() != self.rows.len() {
            return Err(CorpusError::Format("rows, labels and doc ids differ in length".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.indices.len() != row.values.len() {
                return Err(CorpusError::Format(format!("row {r}: index/value length mismatch")));
            }
            if !row.indices.windows(2).all(|w| w[0] < w[1]) {
                return Err(CorpusError::Format(format!("row {r}: indices not strictly increasing")));
            }
            if row.indices.last().is_some_and(|&i| i as usize >= self.cols) {
                return Err(CorpusError::Format(format!("row {r}: index out of range")));
            }
            if row.values.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(CorpusError::Format(format!("row {r}: weight outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A raw document before tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub doc_id: String,
    pub label: Option<u32>,
    pub text: String,
}

/// Builds the vocabulary from `train` and vectorizes both splits against it.
///
/// Documents are processed in `doc_id` order so the result does not depend on
/// the order in which files were read.
pub fn build_split(
    mut train: Vec<RawDocument>,
    mut test: Vec<RawDocument>,
    cfg: &CorpusConfig,
) -> Result<(Vocabulary, DocMatrix, DocMatrix), CorpusError> {
    train.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    test.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let train_tokens: Vec<Vec<String>> = train.iter().map(|d| tokenize(&d.text)).collect();
    let vocab = build_vocab(&train_tokens, cfg)?;

    let mut train_m = DocMatrix::new(vocab.len());
    for (doc, tokens) in train.into_iter().zip(&train_tokens) {
        train_m.push(vectorize(tokens, &vocab, cfg.weighting), doc.label, doc.doc_id);
    }
    let mut test_m = DocMatrix::new(vocab.len());
    for doc in test {
        let tokens = tokenize(&doc.text);
        test_m.push(vectorize(&tokens, &vocab, cfg.weighting), doc.label, doc.doc_id);
    }
    Ok((vocab, train_m, test_m))
}
