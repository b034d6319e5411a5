use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::tensor::Tensor;

/// Pretrained word vectors; absent words map to the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStore {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    table: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoverageReport {
    pub tokens: usize,
    pub covered_tokens: usize,
    pub types: usize,
    pub covered_types: usize,
}

impl CoverageReport {
    pub fn token_ratio(&self) -> f64 {
        if self.tokens == 0 {
            1.0
        } else {
            self.covered_tokens as f64 / self.tokens as f64
        }
    }
}

impl std::fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "embedding coverage: {}/{} tokens ({:.1}%), {}/{} types",
            self.covered_tokens,
            self.tokens,
            100.0 * self.token_ratio(),
            self.covered_types,
            self.types
        )
    }
}

impl EmbeddingStore {
    pub fn new(words: Vec<String>, table: Tensor) -> Result<Self, FeatureError> {
        if words.len() != table.rows() {
            return Err(FeatureError::Embeddings {
                line: 0,
                message: format!("{} words for {} vectors", words.len(), table.rows()),
            });
        }
        let mut store = EmbeddingStore {
            words,
            index: HashMap::new(),
            table,
        };
        store.reindex();
        Ok(store)
    }

    /// An empty store of the given width: every lookup is the zero vector.
    pub fn empty(dim: usize) -> Self {
        EmbeddingStore {
            words: Vec::new(),
            index: HashMap::new(),
            table: Tensor::zeros(0, dim),
        }
    }

    /// Rebuilds the word index; needed after deserializing.
    pub fn reindex(&mut self) {
        self.index.clear();
        for (i, w) in self.words.iter().enumerate() {
            self.index.entry(w.clone()).or_insert(i);
        }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Tensor {
        &mut self.table
    }

    pub fn into_table(self) -> Tensor {
        self.table
    }

    /// Row for a token: verbatim match first, then its lowercase form.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index
            .get(token)
            .or_else(|| self.index.get(&token.to_lowercase()))
            .copied()
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        match self.lookup(token) {
            Some(r) => self.table.row(r).to_vec(),
            None => vec![0.0; self.dim()],
        }
    }

    /// Keeps only the rows that some of `tokens` resolve to.
    pub fn restrict<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut rows: Vec<usize> = tokens.into_iter().filter_map(|t| self.lookup(t)).collect();
        rows.sort_unstable();
        rows.dedup();
        let words = rows.iter().map(|&r| self.words[r].clone()).collect();
        let data = rows.iter().flat_map(|&r| self.table.row(r).iter().copied()).collect();
        let table = Tensor::from_vec(rows.len(), self.dim(), data).expect("row subset keeps width");
        EmbeddingStore::new(words, table).expect("lengths agree")
    }

    pub fn coverage<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> CoverageReport {
        let mut report = CoverageReport::default();
        let mut seen = HashMap::new();
        for t in tokens {
            let hit = self.lookup(t).is_some();
            report.tokens += 1;
            report.covered_tokens += hit as usize;
            seen.insert(t, hit);
        }
        report.types = seen.len();
        report.covered_types = seen.values().filter(|&&h| h).count();
        report
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore, FeatureError> {
    let file = std::fs::File::open(path).map_err(|e| FeatureError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_embeddings(std::io::BufReader::new(file))
}

/// Text vectors: optional `count dim` header, then `token v1 .. v_dim` lines.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingStore, FeatureError> {
    let mut words = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    let mut declared: Option<(usize, usize)> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let err = |message: String| FeatureError::Embeddings { line: lineno, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.filter(|f| !f.is_empty()).collect();
        if lineno == 1 && rest.len() == 1 {
            if let (Ok(c), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                declared = Some((c, d));
                continue;
            }
        }
        let d = *dim.get_or_insert(rest.len());
        if d == 0 {
            return Err(err("vector has no components".into()));
        }
        if rest.len() != d {
            return Err(err(format!("expected {d} components, found {}", rest.len())));
        }
        for f in rest {
            let v: f64 = f.parse().map_err(|_| err(format!("{f:?} is not a number")))?;
            if !v.is_finite() {
                return Err(err(format!("{f:?} is not finite")));
            }
            data.push(v);
        }
        words.push(word.to_string());
    }
    let dim = match (dim, declared) {
        (Some(d), Some((_, hd))) if d != hd => {
            return Err(FeatureError::Embeddings {
                line: 1,
                message: format!("header declares dimension {hd} but vectors have {d}"),
            })
        }
        (Some(d), _) => d,
        (None, Some((_, hd))) => hd,
        (None, None) => 0,
    };
    if let Some((count, _)) = declared {
        if count != words.len() {
            log::warn!("embedding header declares {count} vectors, file has {}", words.len());
        }
    }
    let table = Tensor::from_vec(words.len(), dim, data).map_err(|e| FeatureError::Embeddings {
        line: 0,
        message: e.to_string(),
    })?;
    EmbeddingStore::new(words, table)
}
