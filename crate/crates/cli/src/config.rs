use std::path::{Path, PathBuf};

use kgqa::features::FeatureVariant;
use kgqa::slots::LinkConfig;
use kgqa::treelstm::TrainConfig;
use serde::Deserialize;

use crate::error::Failure;

/// Settings read from `--config`. Every key is optional; flags win over
/// the file and the file wins over built-in defaults. Relative paths are
/// taken relative to the file's directory.
///
/// ```toml
/// dataset = "splits/train.json"
/// parses = "parses.conllu"
/// variant = "emb-pos-rels-chars"
/// seed = 1
///
/// [train]
/// epochs = 7
/// hidden = 150
///
/// [link]
/// spotlight_confidence = 0.4
/// ```
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub heldout: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mock_store: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub parser_url: Option<String>,
    pub spotlight_url: Option<String>,
    pub tagme_url: Option<String>,
    pub variant: Option<String>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub budget: Option<usize>,
    pub jobs: Option<usize>,
    pub train_fraction: Option<f64>,
    pub train: Option<TrainConfig>,
    pub link: Option<LinkConfig>,
}

impl FileConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, Failure> {
        let mut cfg: FileConfig = toml::from_str(text).map_err(|e| Failure::config(format!("config: {e}")))?;
        for p in [
            &mut cfg.dataset,
            &mut cfg.parses,
            &mut cfg.heldout,
            &mut cfg.embeddings,
            &mut cfg.lexicon,
            &mut cfg.model,
            &mut cfg.fixtures,
            &mut cfg.out,
            &mut cfg.mock_store,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn variant(&self) -> Result<Option<FeatureVariant>, Failure> {
        self.variant
            .as_deref()
            .map(|v| v.parse().map_err(|e| Failure::config(format!("config variant: {e}"))))
            .transpose()
    }
}

/// Flag value if given, else the file's.
pub fn pick<T>(flag: Option<T>, file: &Option<T>) -> Option<T>
where
    T: Clone,
{
    flag.or_else(|| file.clone())
}

/// A path that must be set and must exist.
pub fn existing(flag: &str, path: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let path = path.ok_or_else(|| Failure::config(format!("--{flag} is required")))?;
    if !path.exists() {
        return Err(Failure::config(format!("--{flag}: {} does not exist", path.display())));
    }
    Ok(path)
}

/// Like [`existing`] for optional inputs.
pub fn existing_opt(flag: &str, path: Option<PathBuf>) -> Result<Option<PathBuf>, Failure> {
    path.map(|p| existing(flag, Some(p))).transpose()
}

pub fn required<T>(flag: &str, value: Option<T>) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::config(format!("--{flag} is required")))
}

/// Either a live endpoint or a local store, never both.
#[derive(Debug, Clone, PartialEq)]
pub enum EndpointChoice {
    Http(String),
    Mock(PathBuf),
}

pub fn endpoint_choice(
    flag_endpoint: Option<String>,
    flag_mock: Option<PathBuf>,
    file: &FileConfig,
) -> Result<EndpointChoice, Failure> {
    let (url, mock) = if flag_endpoint.is_some() || flag_mock.is_some() {
        (flag_endpoint, flag_mock)
    } else {
        (file.endpoint.clone(), file.mock_store.clone())
    };
    match (url, mock) {
        (Some(_), Some(_)) => Err(Failure::config("--endpoint and --mock-store are mutually exclusive")),
        (Some(u), None) => Ok(EndpointChoice::Http(u)),
        (None, Some(m)) => Ok(EndpointChoice::Mock(existing("mock-store", Some(m))?)),
        (None, None) => Err(Failure::config("one of --endpoint or --mock-store is required")),
    }
}
