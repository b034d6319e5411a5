//! Model file layout (all integers little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic "KGQATREE"
//! 8       4     u32 format version
//! 12      8     u64 header length H
//! 20      H     UTF-8 JSON header (dims, variant, vocabularies and their
//!               hashes, template ids, array names and shapes)
//! 20+H    ...   each array as rows*cols f64 values, row-major, in header order
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::forward::{forward_states, materialize, predict, Prediction};
use super::params::{Activation, ModelDims, ParamId, TreeLstmParams};
use super::train::TrainConfig;
use super::TreeLstmError;
use crate::features::{EmbeddingStore, EncodedQuestion, FeatureVariant, Featurizer, Vocabularies};
use crate::nlp::ParsedQuestion;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"KGQATREE";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0} (expected {BUNDLE_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("bad model header: {0}")]
    Header(String),
    #[error("VOCAB_MISMATCH: {what} hash {found} does not match expected {expected}")]
    VocabMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("model dimension mismatch: {0}")]
    Dimensions(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    variant: FeatureVariant,
    dims: ModelDims,
    update_activation: Activation,
    template_ids: Vec<u32>,
    vocab: Vocabularies,
    vocab_hash: String,
    embedding_words: Vec<String>,
    embedding_words_hash: String,
    train_config: Option<TrainConfig>,
    arrays: Vec<ArrayInfo>,
}

fn words_hash(words: &[String]) -> String {
    let mut h = Sha256::new();
    for w in words {
        h.update(w.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Everything needed to classify a parsed question.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub featurizer: Featurizer,
    pub template_ids: Vec<u32>,
    pub params: TreeLstmParams,
    /// Word for each row of the embedding table.
    pub embedding_words: Vec<String>,
    pub train_config: Option<TrainConfig>,
    lookup: Option<EmbeddingStore>,
}

impl ModelBundle {
    pub fn new(
        featurizer: Featurizer,
        template_ids: Vec<u32>,
        params: TreeLstmParams,
        embedding_words: Vec<String>,
        train_config: Option<TrainConfig>,
    ) -> Result<Self, BundleError> {
        let dims = params.dims;
        if featurizer.dimension() != dims.input || featurizer.embedding_dim != dims.embedding {
            return Err(BundleError::Dimensions(format!(
                "features give {} inputs ({} embedding), parameters expect {} ({})",
                featurizer.dimension(),
                featurizer.embedding_dim,
                dims.input,
                dims.embedding
            )));
        }
        if template_ids.len() != dims.classes {
            return Err(BundleError::Dimensions(format!(
                "{} template ids for {} classes",
                template_ids.len(),
                dims.classes
            )));
        }
        let rows = if params.has_embedding() { params.get(ParamId::Embedding).rows() } else { 0 };
        if rows != embedding_words.len() {
            return Err(BundleError::Dimensions(format!(
                "{} embedding words for {rows} table rows",
                embedding_words.len()
            )));
        }
        let lookup = params.has_embedding().then(|| {
            EmbeddingStore::new(embedding_words.clone(), Tensor::zeros(rows, 0)).expect("row counts agree")
        });
        Ok(ModelBundle {
            featurizer,
            template_ids,
            params,
            embedding_words,
            train_config,
            lookup,
        })
    }

    pub fn vocab_hash(&self) -> String {
        self.featurizer.vocab.hash()
    }

    pub fn check_vocab(&self, vocab: &Vocabularies) -> Result<(), BundleError> {
        let (expected, found) = (self.vocab_hash(), vocab.hash());
        if expected != found {
            return Err(BundleError::VocabMismatch {
                what: "vocabulary",
                expected,
                found,
            });
        }
        Ok(())
    }

    pub fn encode(&self, q: &ParsedQuestion) -> EncodedQuestion {
        self.featurizer
            .encode_with(q, |w| self.lookup.as_ref().and_then(|s| s.lookup(w)))
    }

    pub fn classify(&self, q: &ParsedQuestion) -> Result<Prediction, TreeLstmError> {
        let enc = self.encode(q);
        let inputs = materialize(&self.params, &enc);
        let states = forward_states(&self.params, &q.tree, &inputs)?;
        predict(&states[q.tree.root()].h, &self.params, &self.template_ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arrays = self
            .params
            .ids()
            .into_iter()
            .map(|id| {
                let t = self.params.get(id);
                ArrayInfo {
                    name: id.name(),
                    rows: t.rows(),
                    cols: t.cols(),
                }
            })
            .collect();
        let header = Header {
            variant: self.featurizer.variant,
            dims: self.params.dims,
            update_activation: self.params.update_activation,
            template_ids: self.template_ids.clone(),
            vocab: self.featurizer.vocab.clone(),
            vocab_hash: self.vocab_hash(),
            embedding_words: self.embedding_words.clone(),
            embedding_words_hash: words_hash(&self.embedding_words),
            train_config: self.train_config.clone(),
            arrays,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.params.tensors.iter().map(Tensor::len).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * payload + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&BUNDLE_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.params.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(BundleError::Truncated {
                    needed: n,
                    available: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(8)?;
        if &bytes[..8] != MAGIC {
            return Err(BundleError::BadMagic);
        }
        need(20)?;
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != BUNDLE_FORMAT_VERSION {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        need(20usize.saturating_add(hlen))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..20 + hlen]).map_err(|e| BundleError::Header(e.to_string()))?;
        let payload: usize = header.arrays.iter().map(|a| a.rows * a.cols).sum();
        let total = 20 + hlen + 8 * payload + CHECKSUM_LEN;
        need(total)?;
        if bytes.len() != total {
            return Err(BundleError::Header(format!(
                "{} trailing bytes after the checksum",
                bytes.len() - total
            )));
        }
        if Sha256::digest(&bytes[..total - CHECKSUM_LEN]).as_slice() != &bytes[total - CHECKSUM_LEN..] {
            return Err(BundleError::Checksum);
        }
        let stored = header.vocab.hash();
        if stored != header.vocab_hash {
            return Err(BundleError::VocabMismatch {
                what: "vocabulary",
                expected: header.vocab_hash,
                found: stored,
            });
        }
        let stored = words_hash(&header.embedding_words);
        if stored != header.embedding_words_hash {
            return Err(BundleError::VocabMismatch {
                what: "embedding words",
                expected: header.embedding_words_hash,
                found: stored,
            });
        }
        let ids = ParamId::all(header.arrays.len() > super::params::CORE_PARAMS);
        if ids.len() != header.arrays.len() {
            return Err(BundleError::Header(format!("unexpected array count {}", header.arrays.len())));
        }
        let mut off = 20 + hlen;
        let mut tensors = Vec::with_capacity(ids.len());
        for (id, info) in ids.iter().zip(&header.arrays) {
            if id.name() != info.name {
                return Err(BundleError::Header(format!("expected array {}, found {}", id.name(), info.name)));
            }
            let n = info.rows * info.cols;
            let data = bytes[off..off + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            off += 8 * n;
            tensors.push(Tensor::from_vec(info.rows, info.cols, data).map_err(|e| BundleError::Header(e.to_string()))?);
        }
        let params = TreeLstmParams {
            dims: header.dims,
            update_activation: header.update_activation,
            tensors,
        };
        let shapes_ok = {
            let expect = TreeLstmParams::zeros(header.dims, header.update_activation);
            expect.tensors.iter().zip(&params.tensors).all(|(a, b)| a.shape() == b.shape())
        };
        if !shapes_ok {
            return Err(BundleError::Dimensions("array shapes disagree with the declared dims".into()));
        }
        let featurizer = Featurizer::new(header.variant, header.vocab, header.dims.embedding);
        ModelBundle::new(featurizer, header.template_ids, params, header.embedding_words, header.train_config)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and verifies that the model was built with `vocab`.
    pub fn load_with_vocab(path: &Path, vocab: &Vocabularies) -> Result<Self, BundleError> {
        let b = Self::load(path)?;
        b.check_vocab(vocab)?;
        Ok(b)
    }
}
