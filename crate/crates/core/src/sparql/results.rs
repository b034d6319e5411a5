//! SPARQL 1.1 query results in JSON (`application/sparql-results+json`).

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RdfTerm {
    Iri(String),
    Literal {
        value: String,
        lang: Option<String>,
        datatype: Option<String>,
    },
    Blank(String),
}

impl RdfTerm {
    pub fn literal(value: impl Into<String>) -> Self {
        RdfTerm::Literal {
            value: value.into(),
            lang: None,
            datatype: None,
        }
    }

    /// The lexical value: IRI string, literal value or blank-node label.
    pub fn value(&self) -> &str {
        match self {
            RdfTerm::Iri(v) | RdfTerm::Blank(v) => v,
            RdfTerm::Literal { value, .. } => value,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            RdfTerm::Iri(v) => json!({"type": "uri", "value": v}),
            RdfTerm::Blank(v) => json!({"type": "bnode", "value": v}),
            RdfTerm::Literal {
                value,
                lang,
                datatype,
            } => {
                let mut m = Map::new();
                m.insert("type".into(), "literal".into());
                m.insert("value".into(), value.clone().into());
                if let Some(l) = lang {
                    m.insert("xml:lang".into(), l.clone().into());
                }
                if let Some(d) = datatype {
                    m.insert("datatype".into(), d.clone().into());
                }
                Value::Object(m)
            }
        }
    }

    fn from_json(v: &Value) -> Result<Self, String> {
        let value = v
            .get("value")
            .and_then(Value::as_str)
            .ok_or("binding without string value")?
            .to_string();
        match v.get("type").and_then(Value::as_str) {
            Some("uri") => Ok(RdfTerm::Iri(value)),
            Some("bnode") => Ok(RdfTerm::Blank(value)),
            Some("literal") | Some("typed-literal") => Ok(RdfTerm::Literal {
                value,
                lang: v.get("xml:lang").and_then(Value::as_str).map(String::from),
                datatype: v.get("datatype").and_then(Value::as_str).map(String::from),
            }),
            other => Err(format!("unknown binding type {other:?}")),
        }
    }
}

pub type Solution = BTreeMap<String, RdfTerm>;

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResults {
    Solutions { vars: Vec<String>, rows: Vec<Solution> },
    Boolean(bool),
}

impl QueryResults {
    pub fn to_json(&self) -> Value {
        match self {
            QueryResults::Boolean(b) => json!({"head": {}, "boolean": b}),
            QueryResults::Solutions { vars, rows } => {
                let bindings: Vec<Value> = rows
                    .iter()
                    .map(|row| {
                        Value::Object(
                            row.iter()
                                .map(|(k, t)| (k.clone(), t.to_json()))
                                .collect(),
                        )
                    })
                    .collect();
                json!({"head": {"vars": vars}, "results": {"bindings": bindings}})
            }
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        if let Some(b) = v.get("boolean") {
            return b
                .as_bool()
                .map(QueryResults::Boolean)
                .ok_or_else(|| "non-boolean 'boolean' member".to_string());
        }
        let vars = v
            .pointer("/head/vars")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
            .unwrap_or_default();
        let bindings = v
            .pointer("/results/bindings")
            .and_then(Value::as_array)
            .ok_or("missing results.bindings")?;
        let mut rows = Vec::with_capacity(bindings.len());
        for b in bindings {
            let obj = b.as_object().ok_or("binding is not an object")?;
            let mut row = Solution::new();
            for (k, t) in obj {
                row.insert(k.clone(), RdfTerm::from_json(t)?);
            }
            rows.push(row);
        }
        Ok(QueryResults::Solutions { vars, rows })
    }
}
