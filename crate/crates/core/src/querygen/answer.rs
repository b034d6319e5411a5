use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::QuestionType;
use crate::sparql::results::{QueryResults, RdfTerm};
use crate::sparql::FormKind;

/// What an endpoint returned for one executed query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum AnswerSet {
    Uris { uris: BTreeSet<String> },
    Count { count: u64 },
    Boolean { flag: bool },
}

impl AnswerSet {
    pub fn uris<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AnswerSet::Uris {
            uris: items.into_iter().map(Into::into).collect(),
        }
    }

    pub fn empty() -> Self {
        AnswerSet::Uris {
            uris: BTreeSet::new(),
        }
    }

    pub fn question_type(&self) -> QuestionType {
        match self {
            AnswerSet::Uris { .. } => QuestionType::Entity,
            AnswerSet::Count { .. } => QuestionType::Count,
            AnswerSet::Boolean { .. } => QuestionType::Boolean,
        }
    }

    /// URIs as-is, counts and booleans as singleton sets.
    pub fn as_set(&self) -> BTreeSet<String> {
        match self {
            AnswerSet::Uris { uris } => uris.clone(),
            AnswerSet::Count { count } => BTreeSet::from([count.to_string()]),
            AnswerSet::Boolean { flag } => BTreeSet::from([flag.to_string()]),
        }
    }

    /// Nonempty URI set or a positive count. Booleans are judged elsewhere.
    pub fn is_nonempty(&self) -> bool {
        match self {
            AnswerSet::Uris { uris } => !uris.is_empty(),
            AnswerSet::Count { count } => *count > 0,
            AnswerSet::Boolean { .. } => true,
        }
    }

    /// Reads results of a query of the given form.
    pub fn from_results(form: FormKind, results: &QueryResults) -> Result<Self, String> {
        match (form, results) {
            (FormKind::Ask, QueryResults::Boolean(b)) => Ok(AnswerSet::Boolean { flag: *b }),
            (FormKind::Count, QueryResults::Solutions { vars, rows }) => {
                let Some(var) = vars.first() else {
                    return Err("count result has no variables".into());
                };
                match rows.as_slice() {
                    [] => Ok(AnswerSet::Count { count: 0 }),
                    [row] => {
                        let v = row.get(var).ok_or("count row lacks its variable")?;
                        parse_count(v.value())
                            .map(|count| AnswerSet::Count { count })
                            .ok_or_else(|| format!("count value {:?} is not an integer", v.value()))
                    }
                    _ => Err(format!("count query returned {} rows", rows.len())),
                }
            }
            (FormKind::Select, QueryResults::Solutions { vars, rows }) => {
                let var = if vars.iter().any(|v| v == "uri") {
                    "uri".to_string()
                } else {
                    vars.first().cloned().ok_or("select result has no variables")?
                };
                Ok(AnswerSet::Uris {
                    uris: rows.iter().filter_map(|r| r.get(&var)).map(|t| t.value().to_string()).collect(),
                })
            }
            (f, r) => Err(format!("{f:?} query produced mismatched result {r:?}")),
        }
    }

    /// Interprets a gold answer block whose query form is unknown: a
    /// boolean, a single numeric literal (count), or a set of values.
    pub fn from_gold(results: &QueryResults) -> Self {
        match results {
            QueryResults::Boolean(b) => AnswerSet::Boolean { flag: *b },
            QueryResults::Solutions { vars, rows } => {
                if let ([var], [row]) = (vars.as_slice(), rows.as_slice()) {
                    if let Some(RdfTerm::Literal { value, .. }) = row.get(var) {
                        if let Some(count) = parse_count(value) {
                            return AnswerSet::Count { count };
                        }
                    }
                }
                AnswerSet::Uris {
                    uris: rows
                        .iter()
                        .flat_map(|r| r.values().map(|t| t.value().to_string()))
                        .collect(),
                }
            }
        }
    }
}

fn parse_count(s: &str) -> Option<u64> {
    let s = s.trim();
    s.parse::<u64>().ok().or_else(|| {
        let f: f64 = s.parse().ok()?;
        (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
    })
}
