//! SPARQL subset used throughout the pipeline.
//!
//! The parser covers what the benchmark queries and the catalog templates
//! use: prologue (`PREFIX`/`BASE`), `SELECT`/`ASK` forms with `DISTINCT`
//! and aggregate projections, group graph patterns with `OPTIONAL`,
//! `UNION` and `FILTER`, and the usual solution modifiers. Constructs
//! outside that subset (`BIND`, `VALUES`, sub-selects, ...) are kept as
//! opaque [`Element::Other`] entries so callers can reject them.

mod parse;
pub mod results;

pub use parse::parse_query;
pub use results::{QueryResults, RdfTerm};

use std::fmt;

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Prefixes that DBpedia's endpoint predeclares; benchmark queries rely on them.
pub const DEFAULT_PREFIXES: &[(&str, &str)] = &[
    ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
    ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
    ("owl", "http://www.w3.org/2002/07/owl#"),
    ("xsd", "http://www.w3.org/2001/XMLSchema#"),
    ("foaf", "http://xmlns.com/foaf/0.1/"),
    ("skos", "http://www.w3.org/2004/02/skos/core#"),
    ("dc", "http://purl.org/dc/elements/1.1/"),
    ("dct", "http://purl.org/dc/terms/"),
    ("dbo", "http://dbpedia.org/ontology/"),
    ("onto", "http://dbpedia.org/ontology/"),
    ("dbp", "http://dbpedia.org/property/"),
    ("prop", "http://dbpedia.org/property/"),
    ("dbr", "http://dbpedia.org/resource/"),
    ("res", "http://dbpedia.org/resource/"),
    ("dbc", "http://dbpedia.org/resource/Category:"),
    ("yago", "http://dbpedia.org/class/yago/"),
    ("geo", "http://www.w3.org/2003/01/geo/wgs84_pos#"),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SPARQL syntax error at byte {offset}: {message}")]
pub struct SparqlError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Iri(String),
    Literal {
        lexical: String,
        lang: Option<String>,
        datatype: Option<String>,
    },
    /// A property path other than a single IRI, kept verbatim.
    Path(String),
}

impl Term {
    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Iri(i) => write!(f, "<{i}>"),
            Term::Literal {
                lexical,
                lang,
                datatype,
            } => {
                write!(f, "\"{}\"", lexical.replace('\\', "\\\\").replace('"', "\\\""))?;
                if let Some(l) = lang {
                    write!(f, "@{l}")?;
                } else if let Some(dt) = datatype {
                    write!(f, "^^<{dt}>")?;
                }
                Ok(())
            }
            Term::Path(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl TriplePattern {
    /// `?s rdf:type <C>` with a constant class.
    pub fn is_type_triple(&self) -> bool {
        self.predicate.as_iri() == Some(RDF_TYPE) && self.object.as_iri().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupPattern {
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Triple(TriplePattern),
    Optional(GroupPattern),
    Union(Vec<GroupPattern>),
    Group(GroupPattern),
    /// Raw filter expression text.
    Filter(String),
    /// Unsupported construct, named by its leading keyword.
    Other(String),
}

impl GroupPattern {
    /// All triple patterns, depth first, with a flag telling whether the
    /// triple sits inside an OPTIONAL block.
    pub fn triples(&self) -> Vec<(&TriplePattern, bool)> {
        let mut out = Vec::new();
        self.collect_triples(false, &mut out);
        out
    }

    fn collect_triples<'a>(&'a self, optional: bool, out: &mut Vec<(&'a TriplePattern, bool)>) {
        for el in &self.elements {
            match el {
                Element::Triple(t) => out.push((t, optional)),
                Element::Optional(g) => g.collect_triples(true, out),
                Element::Group(g) => g.collect_triples(optional, out),
                Element::Union(branches) => {
                    for g in branches {
                        g.collect_triples(optional, out);
                    }
                }
                Element::Filter(_) | Element::Other(_) => {}
            }
        }
    }

    pub fn any(&self, pred: &dyn Fn(&Element) -> bool) -> bool {
        self.elements.iter().any(|el| {
            pred(el)
                || match el {
                    Element::Optional(g) | Element::Group(g) => g.any(pred),
                    Element::Union(bs) => bs.iter().any(|g| g.any(pred)),
                    _ => false,
                }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Aggregate {
    Count,
    Min,
    Max,
    Sum,
    Avg,
    Sample,
    GroupConcat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// `SELECT *`
    All,
    Vars(Vec<String>),
    /// `(AGG([DISTINCT] ?v) AS ?alias)`; `var` is `None` for `COUNT(*)`.
    Aggregate {
        func: Aggregate,
        distinct: bool,
        var: Option<String>,
        alias: String,
    },
    /// Any other projection expression.
    Expression(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryForm {
    Select {
        distinct: bool,
        projection: Vec<Projection>,
    },
    Ask,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Modifiers {
    pub group_by: bool,
    pub having: bool,
    pub order_by: bool,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub form: QueryForm,
    pub pattern: GroupPattern,
    pub modifiers: Modifiers,
}

/// Coarse query shape used by template matching and answer typing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormKind {
    Select,
    Count,
    Ask,
}

impl Query {
    pub fn form_kind(&self) -> FormKind {
        match &self.form {
            QueryForm::Ask => FormKind::Ask,
            QueryForm::Select { projection, .. } => {
                if projection.iter().any(|p| {
                    matches!(
                        p,
                        Projection::Aggregate {
                            func: Aggregate::Count,
                            ..
                        }
                    )
                }) {
                    FormKind::Count
                } else {
                    FormKind::Select
                }
            }
        }
    }

    /// The single variable an answer is read from: the projected variable
    /// of a one-variable SELECT, or the counted variable of a COUNT.
    pub fn answer_var(&self) -> Option<&str> {
        match &self.form {
            QueryForm::Ask => None,
            QueryForm::Select { projection, .. } => match projection.as_slice() {
                [Projection::Vars(vs)] if vs.len() == 1 => Some(&vs[0]),
                [Projection::Aggregate { var: Some(v), .. }] => Some(v),
                _ => None,
            },
        }
    }

    pub fn uses_aggregate(&self, f: Aggregate) -> bool {
        match &self.form {
            QueryForm::Select { projection, .. } => projection
                .iter()
                .any(|p| matches!(p, Projection::Aggregate { func, .. } if *func == f)),
            QueryForm::Ask => false,
        }
    }
}

/// Cheap syntactic IRI check: scheme followed by characters legal in an
/// IRI reference.
pub fn is_valid_iri(s: &str) -> bool {
    let Some(colon) = s.find(':') else {
        return false;
    };
    let scheme = &s[..colon];
    let mut chars = scheme.chars();
    let scheme_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    scheme_ok
        && s.len() > colon + 1
        && !s
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\'))
}
