//! Benchmark loading, template merging, splitting and QALD filtering.

mod catalog;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::querygen::AnswerSet;
use crate::sparql::{self, Aggregate, Element, FormKind, QueryResults};

pub use catalog::{
    is_placeholder, match_template, QuestionType, Slot, SlotKind, Template, TemplateCatalog,
    CATALOG_FORMAT_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {message}")]
    Json { path: String, message: String },
    #[error("entry {index}: {message}")]
    Record { index: usize, message: String },
    #[error("template catalog: {0}")]
    Catalog(String),
    #[error("cannot split an empty record list")]
    EmptyInput,
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DatasetTag {
    Lcquad,
    Qald7,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    pub gold_sparql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_template_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_template_id: Option<u32>,
    pub dataset: DatasetTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answers: Option<AnswerSet>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))
}

fn parse_json(text: &str, origin: &str) -> Result<Value, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Json {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

/// Ids appear both as strings and as numbers in the released files.
fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn load_lcquad(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    parse_lcquad(&read(path)?, &path.display().to_string())
}

pub fn parse_lcquad(text: &str, origin: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let value = parse_json(text, origin)?;
    let Value::Array(entries) = value else {
        return Err(DatasetError::Json {
            path: origin.to_string(),
            message: "expected a JSON array".into(),
        });
    };
    entries
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let err = |message: String| DatasetError::Record { index, message };
            let field = |name: &str| e.get(name).ok_or_else(|| err(format!("missing field `{name}`")));
            let id = id_string(field("_id")?).ok_or_else(|| err("`_id` is not a string".into()))?;
            let label = |m: &str| format!("{m} (id {id})");
            let text = field("corrected_question")?
                .as_str()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| err(label("`corrected_question` is not a nonempty string")))?;
            let sparql = field("sparql_query")?
                .as_str()
                .ok_or_else(|| err(label("`sparql_query` is not a string")))?;
            let tid = field("sparql_template_id")?
                .as_u64()
                .and_then(|t| u32::try_from(t).ok())
                .ok_or_else(|| err(label("`sparql_template_id` is not an integer")))?;
            Ok(QuestionRecord {
                id,
                text: text.to_string(),
                gold_sparql: sparql.to_string(),
                original_template_id: Some(tid),
                merged_template_id: None,
                dataset: DatasetTag::Lcquad,
                gold_answers: None,
            })
        })
        .collect()
}

/// Sets merged ids through the catalog's merge map; records whose original
/// template is not mapped are dropped.
pub fn apply_merge(
    records: Vec<QuestionRecord>,
    catalog: &TemplateCatalog,
) -> (Vec<QuestionRecord>, Vec<QuestionRecord>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for mut r in records {
        match r.original_template_id.and_then(|id| catalog.merged_id(id)) {
            Some(m) => {
                r.merged_template_id = Some(m);
                kept.push(r);
            }
            None => dropped.push(r),
        }
    }
    (kept, dropped)
}

/// Deterministic unstratified shuffle split; the train part holds
/// `round(train_fraction * N)` records.
pub fn split_train_test<T: Clone>(
    records: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * records.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

pub fn load_qald(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    parse_qald(&read(path)?, &path.display().to_string())
}

pub fn parse_qald(text: &str, origin: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let value = parse_json(text, origin)?;
    let questions = value
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| DatasetError::Json {
            path: origin.to_string(),
            message: "expected an object with a `questions` array".into(),
        })?;
    let mut out = Vec::with_capacity(questions.len());
    for (index, q) in questions.iter().enumerate() {
        let err = |message: &str| DatasetError::Record {
            index,
            message: message.to_string(),
        };
        let id = q.get("id").and_then(id_string).ok_or_else(|| err("missing `id`"))?;
        let english = q
            .get("question")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .find(|s| s.get("language").and_then(Value::as_str) == Some("en"))
            .and_then(|s| s.get("string").and_then(Value::as_str))
            .map(str::trim)
            .filter(|s| !s.is_empty());
        let Some(text) = english else {
            log::warn!("QALD question {id} has no English string; skipped");
            continue;
        };
        let sparql = q
            .pointer("/query/sparql")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing `query.sparql`"))?;
        let gold_answers = match q.get("answers").and_then(Value::as_array).and_then(|a| a.first()) {
            Some(block) => Some(AnswerSet::from_gold(
                &QueryResults::from_json(block).map_err(|m| err(&format!("bad answers: {m}")))?,
            )),
            None => None,
        };
        out.push(QuestionRecord {
            id,
            text: text.to_string(),
            gold_sparql: sparql.to_string(),
            original_template_id: None,
            merged_template_id: None,
            dataset: DatasetTag::Qald7,
            gold_answers,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    FilterUnion,
    MinMax,
    ManyTriples,
    ComplexBoolean,
    NoTemplate,
    ParseFail,
}

impl std::fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExclusionReason::FilterUnion => "FILTER_UNION",
            ExclusionReason::MinMax => "MIN_MAX",
            ExclusionReason::ManyTriples => "MANY_TRIPLES",
            ExclusionReason::ComplexBoolean => "COMPLEX_BOOLEAN",
            ExclusionReason::NoTemplate => "NO_TEMPLATE",
            ExclusionReason::ParseFail => "PARSE_FAIL",
        })
    }
}

/// Classifies one gold query: the template it instantiates or why it is excluded.
pub fn qald_verdict(gold_sparql: &str, catalog: &TemplateCatalog) -> Result<u32, ExclusionReason> {
    let q = sparql::parse_query(gold_sparql).map_err(|_| ExclusionReason::ParseFail)?;
    if q.pattern
        .any(&|e| matches!(e, Element::Filter(_) | Element::Union(_) | Element::Optional(_)))
    {
        return Err(ExclusionReason::FilterUnion);
    }
    if q.modifiers.order_by || q.uses_aggregate(Aggregate::Min) || q.uses_aggregate(Aggregate::Max) {
        return Err(ExclusionReason::MinMax);
    }
    let triples = q.pattern.triples();
    if triples.iter().filter(|(t, _)| !t.is_type_triple()).count() >= 3 {
        return Err(ExclusionReason::ManyTriples);
    }
    if q.form_kind() == FormKind::Ask && triples.len() >= 2 {
        return Err(ExclusionReason::ComplexBoolean);
    }
    catalog.match_query(&q).ok_or(ExclusionReason::NoTemplate)
}

/// Keeps QALD questions whose gold query instantiates a catalog template.
pub fn filter_qald(
    records: Vec<QuestionRecord>,
    catalog: &TemplateCatalog,
) -> (Vec<QuestionRecord>, Vec<(QuestionRecord, ExclusionReason)>) {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for mut r in records {
        match qald_verdict(&r.gold_sparql, catalog) {
            Ok(id) => {
                r.merged_template_id = Some(id);
                kept.push(r);
            }
            Err(reason) => excluded.push((r, reason)),
        }
    }
    (kept, excluded)
}
