//! In-memory triple store answering the catalog's query shapes, usable
//! in-process or over HTTP.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::thread::JoinHandle;

use rio_api::model as rio;
use rio_api::parser::TriplesParser;
use rio_turtle::{NTriplesParser, TurtleError};

use super::endpoint::{Endpoint, EndpointError};
use crate::sparql::results::Solution;
use crate::sparql::{
    parse_query, Aggregate, Element, GroupPattern, Projection, QueryForm, QueryResults, RdfTerm, Term, TriplePattern,
};

const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("N-Triples: {0}")]
    Syntax(#[from] TurtleError),
    #[error("RDF-star triples are not supported")]
    QuotedTriple,
}

#[derive(Debug, Clone, Default)]
pub struct MockStore {
    triples: Vec<[RdfTerm; 3]>,
    by_predicate: HashMap<RdfTerm, Vec<usize>>,
}

fn subject(s: rio::Subject<'_>) -> Result<RdfTerm, StoreError> {
    match s {
        rio::Subject::NamedNode(n) => Ok(RdfTerm::Iri(n.iri.to_string())),
        rio::Subject::BlankNode(b) => Ok(RdfTerm::Blank(b.id.to_string())),
        rio::Subject::Triple(_) => Err(StoreError::QuotedTriple),
    }
}

fn object(t: rio::Term<'_>) -> Result<RdfTerm, StoreError> {
    match t {
        rio::Term::NamedNode(n) => Ok(RdfTerm::Iri(n.iri.to_string())),
        rio::Term::BlankNode(b) => Ok(RdfTerm::Blank(b.id.to_string())),
        rio::Term::Literal(rio::Literal::Simple { value }) => Ok(RdfTerm::literal(value)),
        rio::Term::Literal(rio::Literal::LanguageTaggedString { value, language }) => Ok(RdfTerm::Literal {
            value: value.to_string(),
            lang: Some(language.to_string()),
            datatype: None,
        }),
        rio::Term::Literal(rio::Literal::Typed { value, datatype }) => Ok(RdfTerm::Literal {
            value: value.to_string(),
            lang: None,
            datatype: Some(datatype.iri.to_string()),
        }),
        rio::Term::Triple(_) => Err(StoreError::QuotedTriple),
    }
}

fn constant(t: &Term) -> Result<Option<RdfTerm>, EndpointError> {
    match t {
        Term::Var(_) => Ok(None),
        Term::Iri(i) => Ok(Some(RdfTerm::Iri(i.clone()))),
        Term::Literal {
            lexical,
            lang,
            datatype,
        } => Ok(Some(RdfTerm::Literal {
            value: lexical.clone(),
            lang: lang.clone(),
            datatype: datatype.clone(),
        })),
        Term::Path(p) => Err(EndpointError::Unsupported(format!("property path {p}"))),
    }
}

/// Binds `t` against `value`; false on conflict.
fn unify(t: &Term, value: &RdfTerm, sol: &mut Solution) -> Result<bool, EndpointError> {
    if let Term::Var(v) = t {
        return Ok(match sol.get(v) {
            Some(bound) => bound == value,
            None => {
                sol.insert(v.clone(), value.clone());
                true
            }
        });
    }
    Ok(constant(t)?.as_ref() == Some(value))
}

impl MockStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, s: RdfTerm, p: RdfTerm, o: RdfTerm) {
        if self.triples.iter().any(|t| t[0] == s && t[1] == p && t[2] == o) {
            return;
        }
        self.by_predicate.entry(p.clone()).or_default().push(self.triples.len());
        self.triples.push([s, p, o]);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn from_ntriples(reader: impl BufRead) -> Result<Self, StoreError> {
        let mut store = MockStore::new();
        NTriplesParser::new(reader).parse_all(&mut |t: rio::Triple<'_>| -> Result<(), StoreError> {
            let s = subject(t.subject)?;
            let o = object(t.object)?;
            store.insert(s, RdfTerm::Iri(t.predicate.iri.to_string()), o);
            Ok(())
        })?;
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let f = std::fs::File::open(path).map_err(|source| StoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_ntriples(std::io::BufReader::new(f))
    }

    fn candidates(&self, tp: &TriplePattern, sol: &Solution) -> Result<Vec<usize>, EndpointError> {
        let p = match &tp.predicate {
            Term::Var(v) => sol.get(v).cloned(),
            other => constant(other)?,
        };
        Ok(match p {
            Some(p) => self.by_predicate.get(&p).cloned().unwrap_or_default(),
            None => (0..self.triples.len()).collect(),
        })
    }

    fn join(&self, tp: &TriplePattern, input: Vec<Solution>) -> Result<Vec<Solution>, EndpointError> {
        let mut out = Vec::new();
        for sol in input {
            for i in self.candidates(tp, &sol)? {
                let [s, p, o] = &self.triples[i];
                let mut next = sol.clone();
                if unify(&tp.subject, s, &mut next)? && unify(&tp.predicate, p, &mut next)? && unify(&tp.object, o, &mut next)? {
                    out.push(next);
                }
            }
        }
        Ok(out)
    }

    fn eval_group(&self, g: &GroupPattern, mut sols: Vec<Solution>) -> Result<Vec<Solution>, EndpointError> {
        for el in &g.elements {
            sols = match el {
                Element::Triple(tp) => self.join(tp, sols)?,
                Element::Group(inner) => self.eval_group(inner, sols)?,
                Element::Optional(inner) => {
                    let mut out = Vec::new();
                    for sol in sols {
                        let ext = self.eval_group(inner, vec![sol.clone()])?;
                        if ext.is_empty() {
                            out.push(sol);
                        } else {
                            out.extend(ext);
                        }
                    }
                    out
                }
                Element::Union(branches) => {
                    let mut out = Vec::new();
                    for b in branches {
                        out.extend(self.eval_group(b, sols.clone())?);
                    }
                    out
                }
                Element::Filter(f) => return Err(EndpointError::Unsupported(format!("FILTER {f}"))),
                Element::Other(k) => return Err(EndpointError::Unsupported(k.clone())),
            };
        }
        Ok(sols)
    }

    /// Evaluates a query from the supported subset.
    pub fn evaluate(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        let q = parse_query(sparql).map_err(|e| EndpointError::Rejected {
            status: 400,
            detail: e.to_string(),
        })?;
        let m = &q.modifiers;
        if m.group_by || m.having || m.order_by {
            return Err(EndpointError::Unsupported("solution modifiers".into()));
        }
        let sols = self.eval_group(&q.pattern, vec![Solution::new()])?;
        let (distinct, projection) = match &q.form {
            QueryForm::Ask => return Ok(QueryResults::Boolean(!sols.is_empty())),
            QueryForm::Select { distinct, projection } => (*distinct, projection),
        };
        if let [Projection::Aggregate {
            func: Aggregate::Count,
            distinct: count_distinct,
            var,
            alias,
        }] = projection.as_slice()
        {
            let n = match var {
                Some(v) => {
                    let vals: Vec<&RdfTerm> = sols.iter().filter_map(|s| s.get(v)).collect();
                    if *count_distinct {
                        vals.into_iter().collect::<BTreeSet<_>>().len()
                    } else {
                        vals.len()
                    }
                }
                None if *count_distinct => sols.iter().collect::<BTreeSet<_>>().len(),
                None => sols.len(),
            };
            let mut row = Solution::new();
            row.insert(
                alias.clone(),
                RdfTerm::Literal {
                    value: n.to_string(),
                    lang: None,
                    datatype: Some(XSD_INTEGER.into()),
                },
            );
            return Ok(QueryResults::Solutions {
                vars: vec![alias.clone()],
                rows: vec![row],
            });
        }
        let vars: Vec<String> = match projection.as_slice() {
            [Projection::All] => sols
                .iter()
                .flat_map(|s| s.keys().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            [Projection::Vars(vs)] => vs.clone(),
            _ => return Err(EndpointError::Unsupported("projection".into())),
        };
        let mut rows: Vec<Solution> = sols
            .into_iter()
            .map(|s| s.into_iter().filter(|(k, _)| vars.contains(k)).collect())
            .collect();
        if distinct {
            let mut seen = BTreeSet::new();
            rows.retain(|r| seen.insert(r.clone()));
        }
        let offset = m.offset.unwrap_or(0) as usize;
        let limit = m.limit.map_or(usize::MAX, |l| l as usize);
        let rows = rows.into_iter().skip(offset).take(limit).collect();
        Ok(QueryResults::Solutions { vars, rows })
    }
}

impl Endpoint for MockStore {
    fn query(&self, sparql: &str) -> Result<QueryResults, EndpointError> {
        self.evaluate(sparql)
    }
}

/// The mock store behind a local SPARQL protocol server.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
}

fn query_param(pairs: &[u8]) -> Option<String> {
    form_urlencoded::parse(pairs)
        .find(|(k, _)| k == "query")
        .map(|(_, v)| v.into_owned())
}

fn handle(store: &MockStore, mut req: tiny_http::Request) {
    let url = req.url().to_string();
    let mut query = url.split_once('?').and_then(|(_, qs)| query_param(qs.as_bytes()));
    if query.is_none() && *req.method() == tiny_http::Method::Post {
        let mut body = Vec::new();
        if req.as_reader().read_to_end(&mut body).is_ok() {
            let is_raw = req
                .headers()
                .iter()
                .any(|h| h.field.equiv("Content-Type") && h.value.as_str().starts_with("application/sparql-query"));
            query = if is_raw {
                String::from_utf8(body).ok()
            } else {
                query_param(&body)
            };
        }
    }
    let (status, body, ctype) = match query.map(|q| store.evaluate(&q)) {
        None => (400, "missing query parameter".to_string(), "text/plain"),
        Some(Ok(r)) => (200, r.to_json().to_string(), "application/sparql-results+json"),
        Some(Err(e)) => (400, e.to_string(), "text/plain"),
    };
    let header = tiny_http::Header::from_bytes("Content-Type", ctype).expect("static header");
    let resp = tiny_http::Response::from_string(body).with_status_code(status).with_header(header);
    if let Err(e) = req.respond(resp) {
        log::warn!("mock endpoint could not respond: {e}");
    }
}

impl MockServer {
    /// Serves `store` on `addr` (use port 0 for any free port).
    pub fn start(store: MockStore, addr: &str) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let worker = server.clone();
        let handle = std::thread::spawn(move || {
            for req in worker.incoming_requests() {
                handle(&store, req);
            }
        });
        Ok(MockServer {
            server,
            addr,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Endpoint URL, e.g. `http://127.0.0.1:8890/sparql`.
    pub fn url(&self) -> String {
        format!("http://{}/sparql", self.addr)
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
