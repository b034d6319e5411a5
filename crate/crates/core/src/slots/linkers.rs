use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{EntityCandidate, LinkerSource};
use crate::sparql::is_valid_iri;

pub const DBPEDIA_RESOURCE: &str = "http://dbpedia.org/resource/";
/// Environment variable holding the TagMe API token.
pub const TAGME_TOKEN_VAR: &str = "TAGME_TOKEN";

#[derive(Debug, Clone, thiserror::Error)]
pub enum LinkError {
    #[error("{service} request failed: {detail}")]
    Http { service: &'static str, detail: String },
    #[error("{service} returned an unreadable payload: {detail}")]
    Payload { service: &'static str, detail: String },
    #[error("environment variable {0} is not set")]
    MissingKey(&'static str),
    #[error("no recorded fixture for question {0}")]
    NoFixture(String),
}

/// One entity-linking service.
pub trait EntityLinker: Send + Sync {
    fn source(&self) -> LinkerSource;
    fn annotate(&self, question: &str) -> Result<Vec<EntityCandidate>, LinkError>;
}

fn multiword(surface: &str) -> bool {
    surface.split_whitespace().count() > 1
}

/// Drops annotations whose span is not in the question or whose URI is malformed.
fn keep(question: &str, c: &EntityCandidate) -> bool {
    let ok = question.contains(&c.surface) && !c.surface.is_empty() && is_valid_iri(&c.uri);
    if !ok {
        log::warn!("dropping {:?} annotation {:?} -> {}", c.source, c.surface, c.uri);
    }
    ok
}

fn number(v: Option<&Value>) -> Option<f64> {
    match v? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Reads a DBpedia Spotlight `/rest/annotate` JSON response.
pub fn parse_spotlight(question: &str, payload: &Value) -> Result<Vec<EntityCandidate>, LinkError> {
    let bad = |detail: &str| LinkError::Payload {
        service: "spotlight",
        detail: detail.to_string(),
    };
    let Some(resources) = payload.get("Resources") else {
        return Ok(Vec::new());
    };
    let resources = resources.as_array().ok_or_else(|| bad("Resources is not an array"))?;
    let mut out = Vec::new();
    for r in resources {
        let uri = r.get("@URI").and_then(Value::as_str).ok_or_else(|| bad("resource without @URI"))?;
        let surface = r.get("@surfaceForm").and_then(Value::as_str).unwrap_or_default();
        let c = EntityCandidate {
            uri: uri.to_string(),
            surface: surface.to_string(),
            source: LinkerSource::Spotlight,
            score: number(r.get("@similarityScore")).unwrap_or(0.0),
            multiword: multiword(surface),
        };
        if keep(question, &c) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Reads a TagMe `/tag` JSON response; titles become DBpedia resources.
pub fn parse_tagme(question: &str, payload: &Value) -> Result<Vec<EntityCandidate>, LinkError> {
    let bad = |detail: &str| LinkError::Payload {
        service: "tagme",
        detail: detail.to_string(),
    };
    let Some(annotations) = payload.get("annotations") else {
        return Ok(Vec::new());
    };
    let annotations = annotations.as_array().ok_or_else(|| bad("annotations is not an array"))?;
    let mut out = Vec::new();
    for a in annotations {
        let Some(title) = a.get("title").and_then(Value::as_str) else {
            continue;
        };
        let spot = a.get("spot").and_then(Value::as_str).ok_or_else(|| bad("annotation without spot"))?;
        let c = EntityCandidate {
            uri: format!("{DBPEDIA_RESOURCE}{}", title.replace(' ', "_")),
            surface: spot.to_string(),
            source: LinkerSource::Tagme,
            score: number(a.get("rho")).unwrap_or(0.0),
            multiword: multiword(spot),
        };
        if keep(question, &c) {
            out.push(c);
        }
    }
    Ok(out)
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn read_json(service: &'static str, r: Result<ureq::Response, ureq::Error>) -> Result<Value, LinkError> {
    let http = |detail: String| LinkError::Http { service, detail };
    let body = r.map_err(|e| http(e.to_string()))?.into_string().map_err(|e| http(e.to_string()))?;
    serde_json::from_str(&body).map_err(|e| LinkError::Payload {
        service,
        detail: e.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct SpotlightClient {
    base_url: String,
    confidence: f64,
    agent: ureq::Agent,
}

impl SpotlightClient {
    pub fn new(base_url: impl Into<String>, confidence: f64, timeout: Duration) -> Self {
        SpotlightClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            confidence,
            agent: agent(timeout),
        }
    }
}

impl EntityLinker for SpotlightClient {
    fn source(&self) -> LinkerSource {
        LinkerSource::Spotlight
    }

    fn annotate(&self, question: &str) -> Result<Vec<EntityCandidate>, LinkError> {
        let confidence = self.confidence.to_string();
        let resp = self
            .agent
            .post(&format!("{}/rest/annotate", self.base_url))
            .set("Accept", "application/json")
            .send_form(&[("text", question), ("confidence", &confidence)]);
        parse_spotlight(question, &read_json("spotlight", resp)?)
    }
}

#[derive(Debug, Clone)]
pub struct TagmeClient {
    base_url: String,
    token: String,
    agent: ureq::Agent,
}

impl TagmeClient {
    /// Reads the token from [`TAGME_TOKEN_VAR`].
    pub fn from_env(base_url: impl Into<String>, timeout: Duration) -> Result<Self, LinkError> {
        let token = std::env::var(TAGME_TOKEN_VAR).map_err(|_| LinkError::MissingKey(TAGME_TOKEN_VAR))?;
        Ok(TagmeClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent: agent(timeout),
        })
    }
}

impl EntityLinker for TagmeClient {
    fn source(&self) -> LinkerSource {
        LinkerSource::Tagme
    }

    fn annotate(&self, question: &str) -> Result<Vec<EntityCandidate>, LinkError> {
        let resp = self
            .agent
            .get(&format!("{}/tag", self.base_url))
            .query("text", question)
            .query("lang", "en")
            .query("gcube-token", &self.token)
            .call();
        parse_tagme(question, &read_json("tagme", resp)?)
    }
}

/// Fixture key of a question: hex SHA-256 of the trimmed text.
pub fn question_key(question: &str) -> String {
    hex::encode(Sha256::digest(question.trim().as_bytes()))
}

/// Recorded linker output for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    #[serde(default)]
    pub text: String,
    /// Raw TagMe response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tagme: Option<Value>,
    /// Raw Spotlight response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spotlight: Option<Value>,
    /// Hand-listed candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<EntityCandidate>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureSet {
    entries: BTreeMap<String, FixtureEntry>,
}

impl FixtureSet {
    pub fn new(entries: BTreeMap<String, FixtureEntry>) -> Self {
        FixtureSet { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text).map(FixtureSet::new)
    }

    pub fn load(path: &Path) -> Result<Self, LinkError> {
        let text = std::fs::read_to_string(path).map_err(|e| LinkError::Payload {
            service: "fixture",
            detail: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text).map_err(|e| LinkError::Payload {
            service: "fixture",
            detail: format!("{}: {e}", path.display()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("fixtures serialize")
    }

    pub fn insert(&mut self, entry: FixtureEntry) {
        self.entries.insert(question_key(&entry.text), entry);
    }

    pub fn get(&self, question: &str) -> Option<&FixtureEntry> {
        self.entries.get(&question_key(question))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaying linkers for TagMe, Spotlight and hand-listed candidates.
    pub fn linkers(self) -> Vec<Box<dyn EntityLinker>> {
        let set = Arc::new(self);
        [LinkerSource::Tagme, LinkerSource::Spotlight, LinkerSource::Fixture]
            .into_iter()
            .map(|source| Box::new(FixtureLinker { set: set.clone(), source }) as Box<dyn EntityLinker>)
            .collect()
    }
}

/// Replays one recorded service from a [`FixtureSet`].
#[derive(Debug, Clone)]
pub struct FixtureLinker {
    set: Arc<FixtureSet>,
    source: LinkerSource,
}

impl FixtureLinker {
    pub fn new(set: Arc<FixtureSet>, source: LinkerSource) -> Self {
        FixtureLinker { set, source }
    }
}

impl EntityLinker for FixtureLinker {
    fn source(&self) -> LinkerSource {
        self.source
    }

    fn annotate(&self, question: &str) -> Result<Vec<EntityCandidate>, LinkError> {
        let entry = self
            .set
            .get(question)
            .ok_or_else(|| LinkError::NoFixture(question_key(question)))?;
        match self.source {
            LinkerSource::Tagme => entry.tagme.as_ref().map_or(Ok(Vec::new()), |p| parse_tagme(question, p)),
            LinkerSource::Spotlight => entry
                .spotlight
                .as_ref()
                .map_or(Ok(Vec::new()), |p| parse_spotlight(question, p)),
            LinkerSource::Fixture => Ok(entry
                .candidates
                .iter()
                .map(|c| EntityCandidate {
                    source: LinkerSource::Fixture,
                    multiword: multiword(&c.surface),
                    ..c.clone()
                })
                .filter(|c| keep(question, c))
                .collect()),
        }
    }
}
