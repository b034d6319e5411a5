//! Per-node input vectors for the classifier.

mod embeddings;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nlp::ParsedQuestion;

pub use embeddings::{load_embeddings, read_embeddings, CoverageReport, EmbeddingStore};

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embeddings line {line}: {message}")]
    Embeddings { line: usize, message: String },
    #[error("embedding dimension mismatch: features expect {expected}, store has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot build vocabularies from an empty training set")]
    EmptyTrainingSet,
    #[error("unknown feature variant {0:?}")]
    UnknownVariant(String),
}

/// Symbol inventories seen in the training split, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub pos: Vec<String>,
    pub rels: Vec<String>,
    pub chars: Vec<char>,
}

pub fn build_vocab(train: &[ParsedQuestion]) -> Result<Vocabularies, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut pos = BTreeSet::new();
    let mut rels = BTreeSet::new();
    let mut chars = BTreeSet::new();
    for q in train {
        for t in q.tree.nodes() {
            pos.insert(t.pos.clone());
            rels.insert(t.rel.clone());
            chars.extend(t.surface.chars());
        }
    }
    Ok(Vocabularies {
        pos: pos.into_iter().collect(),
        rels: rels.into_iter().collect(),
        chars: chars.into_iter().collect(),
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Vocabularies {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabularies serialize")
    }

    /// SHA-256 over the compact JSON snapshot.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("vocabularies serialize").as_bytes())
    }
}

pub fn one_hot<S: AsRef<str> + Ord>(symbol: &str, set: &[S]) -> Vec<f64> {
    let mut v = vec![0.0; set.len()];
    if let Ok(i) = set.binary_search_by(|s| s.as_ref().cmp(symbol)) {
        v[i] = 1.0;
    }
    v
}

/// Mean of the characters' one-hot vectors; unknown characters add zero.
pub fn char_vector(word: &str, chars: &[char]) -> Vec<f64> {
    let mut v = vec![0.0; chars.len()];
    let n = word.chars().count();
    if n == 0 {
        return v;
    }
    let w = 1.0 / n as f64;
    for c in word.chars() {
        if let Ok(i) = chars.binary_search(&c) {
            v[i] += w;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureVariant {
    Pos,
    PosRels,
    Fasttext,
    FasttextPosRels,
    FasttextPosRelsChars,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 5] = [
        FeatureVariant::Pos,
        FeatureVariant::PosRels,
        FeatureVariant::Fasttext,
        FeatureVariant::FasttextPosRels,
        FeatureVariant::FasttextPosRelsChars,
    ];

    pub fn uses_embedding(self) -> bool {
        matches!(
            self,
            FeatureVariant::Fasttext | FeatureVariant::FasttextPosRels | FeatureVariant::FasttextPosRelsChars
        )
    }

    pub fn uses_pos(self) -> bool {
        !matches!(self, FeatureVariant::Fasttext)
    }

    pub fn uses_rels(self) -> bool {
        !matches!(self, FeatureVariant::Pos | FeatureVariant::Fasttext)
    }

    pub fn uses_chars(self) -> bool {
        matches!(self, FeatureVariant::FasttextPosRelsChars)
    }

    /// Width of the one-hot part (everything after the embedding segment).
    pub fn fixed_dimension(self, vocab: &Vocabularies) -> usize {
        let mut d = 0;
        if self.uses_pos() {
            d += vocab.pos.len();
        }
        if self.uses_rels() {
            d += vocab.rels.len();
        }
        if self.uses_chars() {
            d += vocab.chars.len();
        }
        d
    }

    pub fn dimension(self, vocab: &Vocabularies, embedding_dim: usize) -> usize {
        let emb = if self.uses_embedding() { embedding_dim } else { 0 };
        emb + self.fixed_dimension(vocab)
    }

    /// Command-line spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            FeatureVariant::Pos => "pos",
            FeatureVariant::PosRels => "pos-rels",
            FeatureVariant::Fasttext => "emb",
            FeatureVariant::FasttextPosRels => "emb-pos-rels",
            FeatureVariant::FasttextPosRelsChars => "emb-pos-rels-chars",
        }
    }
}

impl std::str::FromStr for FeatureVariant {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureVariant::ALL
            .into_iter()
            .find(|v| v.cli_name() == s)
            .or(match s.to_ascii_uppercase().as_str() {
                "POS" => Some(FeatureVariant::Pos),
                "POS_RELS" => Some(FeatureVariant::PosRels),
                "FASTTEXT" => Some(FeatureVariant::Fasttext),
                "FASTTEXT_POS_RELS" => Some(FeatureVariant::FasttextPosRels),
                "FASTTEXT_POS_RELS_CHARS" => Some(FeatureVariant::FasttextPosRelsChars),
                _ => None,
            })
            .ok_or_else(|| FeatureError::UnknownVariant(s.to_string()))
    }
}

impl std::fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

/// A question reduced to what the classifier consumes: per node, the
/// embedding row (if any) and the one-hot part of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuestion {
    pub embedding_rows: Vec<Option<usize>>,
    pub fixed: Vec<Vec<f64>>,
}

/// Turns parses into input vectors for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub variant: FeatureVariant,
    pub vocab: Vocabularies,
    /// Embedding width; 0 when the variant has no embedding segment.
    pub embedding_dim: usize,
}

impl Featurizer {
    pub fn new(variant: FeatureVariant, vocab: Vocabularies, embedding_dim: usize) -> Self {
        let embedding_dim = if variant.uses_embedding() { embedding_dim } else { 0 };
        Featurizer {
            variant,
            vocab,
            embedding_dim,
        }
    }

    pub fn dimension(&self) -> usize {
        self.variant.dimension(&self.vocab, self.embedding_dim)
    }

    pub fn fixed_dimension(&self) -> usize {
        self.variant.fixed_dimension(&self.vocab)
    }

    fn check_store(&self, emb: Option<&EmbeddingStore>) -> Result<(), FeatureError> {
        if !self.variant.uses_embedding() {
            return Ok(());
        }
        let found = emb.map_or(0, EmbeddingStore::dim);
        if found != self.embedding_dim {
            return Err(FeatureError::DimensionMismatch {
                expected: self.embedding_dim,
                found,
            });
        }
        Ok(())
    }

    pub fn encode(&self, q: &ParsedQuestion, emb: Option<&EmbeddingStore>) -> Result<EncodedQuestion, FeatureError> {
        self.check_store(emb)?;
        Ok(self.encode_with(q, |w| emb.and_then(|s| s.lookup(w))))
    }

    /// Encodes with a caller-supplied word-to-row lookup.
    pub fn encode_with(&self, q: &ParsedQuestion, lookup: impl Fn(&str) -> Option<usize>) -> EncodedQuestion {
        let v = self.variant;
        let mut embedding_rows = Vec::with_capacity(q.tree.len());
        let mut fixed = Vec::with_capacity(q.tree.len());
        for t in q.tree.nodes() {
            embedding_rows.push(if v.uses_embedding() { lookup(&t.surface) } else { None });
            let mut x = Vec::with_capacity(self.fixed_dimension());
            if v.uses_pos() {
                x.extend(one_hot(&t.pos, &self.vocab.pos));
            }
            if v.uses_rels() {
                x.extend(one_hot(&t.rel, &self.vocab.rels));
            }
            if v.uses_chars() {
                x.extend(char_vector(&t.surface, &self.vocab.chars));
            }
            fixed.push(x);
        }
        EncodedQuestion { embedding_rows, fixed }
    }

    /// Full input vectors `[embedding | pos | rels | chars]`, one per node.
    pub fn vectorize(&self, q: &ParsedQuestion, emb: Option<&EmbeddingStore>) -> Result<Vec<Vec<f64>>, FeatureError> {
        let enc = self.encode(q, emb)?;
        Ok(enc
            .embedding_rows
            .iter()
            .zip(enc.fixed)
            .map(|(row, fixed)| {
                let mut x = Vec::with_capacity(self.dimension());
                if self.variant.uses_embedding() {
                    match (row, emb) {
                        (Some(r), Some(store)) => x.extend_from_slice(store.table().row(*r)),
                        _ => x.extend(std::iter::repeat_n(0.0, self.embedding_dim)),
                    }
                }
                x.extend(fixed);
                x
            })
            .collect())
    }
}

/// One-shot form of [`Featurizer::vectorize`] sized by the given store.
pub fn vectorize(
    q: &ParsedQuestion,
    variant: FeatureVariant,
    vocab: &Vocabularies,
    emb: Option<&EmbeddingStore>,
) -> Result<Vec<Vec<f64>>, FeatureError> {
    let dim = emb.map_or(0, EmbeddingStore::dim);
    Featurizer::new(variant, vocab.clone(), dim).vectorize(q, emb)
}
