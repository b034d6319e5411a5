//! The fifteen merged SPARQL templates and structural query matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sparql::{self, Element, FormKind, Query, Term, TriplePattern};

use super::DatasetError;

pub const CATALOG_FORMAT_VERSION: u32 = 1;

const BUILTIN_CATALOG: &str = include_str!("../../data/templates.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QuestionType {
    Entity,
    Count,
    Boolean,
}

impl std::fmt::Display for QuestionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuestionType::Entity => "ENTITY",
            QuestionType::Count => "COUNT",
            QuestionType::Boolean => "BOOLEAN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SlotKind {
    Resource,
    Predicate,
    Class,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub kind: SlotKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: u32,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    /// SPARQL with `<r>`, `<p>`, `<r2>`, `<p2>`, `<class>` placeholders.
    pub pattern: String,
    pub slots: Vec<Slot>,
}

impl Template {
    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn class_slot(&self) -> Option<&Slot> {
        self.slots.iter().find(|s| s.kind == SlotKind::Class)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    templates: Vec<Template>,
    merge_map: BTreeMap<String, u32>,
}

/// Structural form of a template, precomputed for matching.
#[derive(Debug, Clone)]
struct Signature {
    form: FormKind,
    core: Vec<TriplePattern>,
    /// Variable carrying the class triple and whether it is required.
    class: Option<(String, bool)>,
}

#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: Vec<Template>,
    merge_map: BTreeMap<u32, u32>,
    signatures: Vec<Signature>,
}

pub fn is_placeholder(iri: &str) -> bool {
    matches!(iri, "r" | "p" | "r2" | "p2" | "class")
}

impl TemplateCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("built-in catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| DatasetError::Catalog(e.to_string()))?;
        if file.version != CATALOG_FORMAT_VERSION {
            return Err(DatasetError::Catalog(format!(
                "unsupported catalog version {}",
                file.version
            )));
        }
        let mut merge_map = BTreeMap::new();
        for (k, v) in file.merge_map {
            let orig: u32 = k
                .parse()
                .map_err(|_| DatasetError::Catalog(format!("merge_map key {k:?} is not an integer")))?;
            merge_map.insert(orig, v);
        }
        Self::new(file.templates, merge_map)
    }

    pub fn new(templates: Vec<Template>, merge_map: BTreeMap<u32, u32>) -> Result<Self, DatasetError> {
        let bad = |id: u32, msg: String| DatasetError::Catalog(format!("template {id}: {msg}"));
        let mut ids = BTreeSet::new();
        let mut signatures = Vec::with_capacity(templates.len());
        for t in &templates {
            if !ids.insert(t.id) {
                return Err(bad(t.id, "duplicate id".into()));
            }
            let q = sparql::parse_query(&t.pattern).map_err(|e| bad(t.id, e.to_string()))?;
            if (t.question_type == QuestionType::Boolean) != t.pattern.trim_start().starts_with("ASK") {
                return Err(bad(t.id, "BOOLEAN templates and only those must be ASK queries".into()));
            }
            // placeholder -> inside OPTIONAL?
            let mut seen: BTreeMap<String, bool> = BTreeMap::new();
            for (tp, optional) in q.pattern.triples() {
                for term in [&tp.subject, &tp.predicate, &tp.object] {
                    if let Term::Iri(iri) = term {
                        if is_placeholder(iri) {
                            seen.insert(iri.clone(), optional);
                        }
                    }
                }
            }
            let slot_names: Vec<&str> = t.slots.iter().map(|s| s.name.as_str()).collect();
            let unique: BTreeSet<&str> = slot_names.iter().copied().collect();
            if unique.len() != slot_names.len() {
                return Err(bad(t.id, "slot listed twice".into()));
            }
            if unique != seen.keys().map(String::as_str).collect() {
                return Err(bad(
                    t.id,
                    format!("slots {slot_names:?} do not match placeholders {:?}", seen.keys()),
                ));
            }
            for s in &t.slots {
                let in_optional = seen[&s.name];
                if s.required == in_optional {
                    return Err(bad(
                        t.id,
                        format!("slot {} must be optional iff it sits inside OPTIONAL", s.name),
                    ));
                }
                if !s.required && s.kind != SlotKind::Class {
                    return Err(bad(t.id, "only class slots may be optional".into()));
                }
            }
            signatures.push(signature_of_template(&q).map_err(|m| bad(t.id, m))?);
        }
        for (orig, merged) in &merge_map {
            if !ids.contains(merged) {
                return Err(DatasetError::Catalog(format!(
                    "merge_map sends {orig} to unknown template {merged}"
                )));
            }
        }
        Ok(TemplateCatalog {
            templates,
            merge_map,
            signatures,
        })
    }

    /// N_t, the number of classes.
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn ids(&self) -> Vec<u32> {
        self.templates.iter().map(|t| t.id).collect()
    }

    pub fn get(&self, id: u32) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// Position of a template id in catalog order (the classifier's class index).
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.templates.iter().position(|t| t.id == id)
    }

    pub fn merge_map(&self) -> &BTreeMap<u32, u32> {
        &self.merge_map
    }

    pub fn merged_id(&self, original: u32) -> Option<u32> {
        self.merge_map.get(&original).copied()
    }

    pub fn question_type(&self, id: u32) -> Option<QuestionType> {
        self.get(id).map(|t| t.question_type)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            version: CATALOG_FORMAT_VERSION,
            templates: self.templates.clone(),
            merge_map: self.merge_map.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    /// The unique template whose structure the query instantiates.
    pub fn match_query(&self, q: &Query) -> Option<u32> {
        let shape = QueryShape::of(q)?;
        let mut found = None;
        for (t, sig) in self.templates.iter().zip(&self.signatures) {
            if unify(sig, &shape) {
                if found.is_some() {
                    return None;
                }
                found = Some(t.id);
            }
        }
        found
    }
}

/// Parses and matches a SPARQL string; `None` when unparseable, unmatched
/// or ambiguous.
pub fn match_template(sparql: &str, catalog: &TemplateCatalog) -> Option<u32> {
    let q = sparql::parse_query(sparql).ok()?;
    catalog.match_query(&q)
}

fn signature_of_template(q: &Query) -> Result<Signature, String> {
    let mut core = Vec::new();
    let mut class = None;
    for (tp, optional) in q.pattern.triples() {
        if tp.predicate.as_iri() == Some(sparql::RDF_TYPE) && tp.object.as_iri() == Some("class") {
            let var = tp
                .subject
                .as_var()
                .ok_or("class triple subject must be a variable")?;
            class = Some((var.to_string(), !optional));
        } else if optional {
            return Err("only the class triple may be OPTIONAL".into());
        } else {
            core.push(tp.clone());
        }
    }
    Ok(Signature {
        form: q.form_kind(),
        core,
        class,
    })
}

/// Canonical view of a concrete query.
struct QueryShape {
    form: FormKind,
    answer_var: Option<String>,
    core: Vec<TriplePattern>,
    types: Vec<TriplePattern>,
}

impl QueryShape {
    fn of(q: &Query) -> Option<Self> {
        if q.pattern
            .any(&|e| matches!(e, Element::Filter(_) | Element::Union(_) | Element::Other(_)))
        {
            return None;
        }
        let form = q.form_kind();
        let answer_var = match form {
            FormKind::Ask => None,
            _ => Some(q.answer_var()?.to_string()),
        };
        let mut core = Vec::new();
        let mut types = Vec::new();
        for (tp, optional) in q.pattern.triples() {
            if matches!(tp.predicate, Term::Path(_) | Term::Var(_)) {
                return None;
            }
            if tp.is_type_triple() && tp.subject.is_var() {
                types.push(tp.clone());
            } else if optional {
                return None;
            } else {
                core.push(tp.clone());
            }
        }
        Some(QueryShape {
            form,
            answer_var,
            core,
            types,
        })
    }
}

#[derive(Clone, Default)]
struct Bindings {
    vars: HashMap<String, String>,
    vars_rev: HashMap<String, String>,
    slots: HashMap<String, String>,
    slots_rev: HashMap<String, String>,
}

impl Bindings {
    fn bind(map: &mut HashMap<String, String>, rev: &mut HashMap<String, String>, k: &str, v: &str) -> bool {
        match (map.get(k), rev.get(v)) {
            (Some(a), _) if a != v => false,
            (_, Some(b)) if b != k => false,
            _ => {
                map.insert(k.to_string(), v.to_string());
                rev.insert(v.to_string(), k.to_string());
                true
            }
        }
    }

    fn term(&mut self, template: &Term, query: &Term) -> bool {
        match (template, query) {
            (Term::Var(tv), Term::Var(qv)) => Self::bind(&mut self.vars, &mut self.vars_rev, tv, qv),
            (Term::Iri(ph), Term::Iri(iri)) if is_placeholder(ph) => {
                Self::bind(&mut self.slots, &mut self.slots_rev, ph, iri)
            }
            (Term::Iri(a), Term::Iri(b)) => a == b,
            _ => false,
        }
    }

    fn triple(&mut self, t: &TriplePattern, q: &TriplePattern) -> bool {
        self.term(&t.subject, &q.subject)
            && self.term(&t.predicate, &q.predicate)
            && self.term(&t.object, &q.object)
    }
}

fn unify(sig: &Signature, q: &QueryShape) -> bool {
    if sig.form != q.form || sig.core.len() != q.core.len() {
        return false;
    }
    match (&sig.class, q.types.len()) {
        (None, 0) => {}
        (None, _) => return false,
        (Some(_), n) if n > 1 => return false,
        (Some((_, true)), 0) => return false,
        _ => {}
    }
    let mut start = Bindings::default();
    if let Some(v) = &q.answer_var {
        Bindings::bind(&mut start.vars, &mut start.vars_rev, "uri", v);
    }
    permutations(q.core.len()).into_iter().any(|perm| {
        let mut b = start.clone();
        let core_ok = sig
            .core
            .iter()
            .zip(&perm)
            .all(|(t, &i)| b.triple(t, &q.core[i]));
        if !core_ok {
            return false;
        }
        match (&sig.class, q.types.first()) {
            (Some((var, _)), Some(tt)) => {
                let class_triple = TriplePattern {
                    subject: Term::Var(var.clone()),
                    predicate: Term::Iri(sparql::RDF_TYPE.into()),
                    object: Term::Iri("class".into()),
                };
                b.triple(&class_triple, tt)
            }
            _ => true,
        }
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}
