//! Candidate IRIs for template slots: resources from entity linkers,
//! predicates and classes from a surface-form lexicon.

mod lexicon;
mod linkers;

pub use lexicon::{iri_kind, load_lexicon, match_lexicon, normalize_words, Lexicon};
pub use linkers::{
    parse_spotlight, parse_tagme, question_key, EntityLinker, FixtureEntry, FixtureLinker, FixtureSet, LinkError,
    SpotlightClient, TagmeClient, DBPEDIA_RESOURCE, TAGME_TOKEN_VAR,
};

use serde::{Deserialize, Serialize};

use crate::dataset::SlotKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkerSource {
    Tagme,
    Spotlight,
    #[default]
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub uri: String,
    /// Matched span of the question.
    pub surface: String,
    #[serde(default)]
    pub source: LinkerSource,
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub multiword: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SlotError {
    #[error("no entity linker configured")]
    NoLinkers,
    #[error("every entity linker failed; last error: {0}")]
    AllLinkersFailed(LinkError),
    #[error("lexicon: {0}")]
    Lexicon(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// Spotlight annotations scoring below this are dropped.
    pub spotlight_confidence: f64,
    /// TagMe annotations with rho below this are dropped.
    pub tagme_rho: f64,
    /// Maximum candidates kept per slot kind.
    pub cap: usize,
    /// Linker requests in flight at once.
    pub fan_out: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            spotlight_confidence: 0.4,
            tagme_rho: 0.1,
            cap: 10,
            fan_out: 4,
        }
    }
}

/// 0: TagMe multi-word, 1: Spotlight and hand-listed, 2: TagMe single-word.
fn group(c: &EntityCandidate) -> u8 {
    match (c.source, c.multiword) {
        (LinkerSource::Tagme, true) => 0,
        (LinkerSource::Tagme, false) => 2,
        _ => 1,
    }
}

/// Merges the outputs of several linkers into one ranked, deduplicated
/// list. Linkers run concurrently, at most `fan_out` at a time; a failing
/// linker is skipped unless all of them fail.
pub fn link_entities(
    question: &str,
    linkers: &[Box<dyn EntityLinker>],
    config: &LinkConfig,
) -> Result<Vec<EntityCandidate>, SlotError> {
    if question.trim().is_empty() {
        return Ok(Vec::new());
    }
    if linkers.is_empty() {
        return Err(SlotError::NoLinkers);
    }
    let mut results = Vec::with_capacity(linkers.len());
    for chunk in linkers.chunks(config.fan_out.max(1)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|l| s.spawn(|| l.annotate(question))).collect();
            for h in handles {
                results.push(h.join().expect("linker thread panicked"));
            }
        });
    }
    let mut pooled = Vec::new();
    let mut last_err = None;
    let mut any_ok = false;
    for (linker, r) in linkers.iter().zip(results) {
        match r {
            Ok(cands) => {
                any_ok = true;
                pooled.extend(cands);
            }
            Err(e) => {
                log::warn!("{:?} linker skipped: {e}", linker.source());
                last_err = Some(e);
            }
        }
    }
    if !any_ok {
        return Err(SlotError::AllLinkersFailed(last_err.expect("at least one linker ran")));
    }
    pooled.retain(|c| match c.source {
        LinkerSource::Spotlight => c.score >= config.spotlight_confidence,
        LinkerSource::Tagme => c.score >= config.tagme_rho,
        LinkerSource::Fixture => true,
    });
    pooled.sort_by(|a, b| group(a).cmp(&group(b)).then(b.score.total_cmp(&a.score)));
    let mut out: Vec<EntityCandidate> = Vec::new();
    for c in pooled {
        if !out.iter().any(|o| o.uri == c.uri) {
            out.push(c);
        }
    }
    out.truncate(config.cap);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotCandidates {
    pub resources: Vec<EntityCandidate>,
    pub predicates: Vec<String>,
    pub classes: Vec<String>,
}

impl SlotCandidates {
    pub fn gather(
        question: &str,
        linkers: &[Box<dyn EntityLinker>],
        lexicon: &Lexicon,
        config: &LinkConfig,
    ) -> Result<Self, SlotError> {
        let resources = link_entities(question, linkers, config)?;
        let mut predicates = lexicon.matches(question, SlotKind::Predicate);
        let mut classes = lexicon.matches(question, SlotKind::Class);
        predicates.truncate(config.cap);
        classes.truncate(config.cap);
        Ok(SlotCandidates {
            resources,
            predicates,
            classes,
        })
    }

    /// Ranked IRIs for a slot kind.
    pub fn of_kind(&self, kind: SlotKind) -> Vec<&str> {
        match kind {
            SlotKind::Resource => self.resources.iter().map(|c| c.uri.as_str()).collect(),
            SlotKind::Predicate => self.predicates.iter().map(String::as_str).collect(),
            SlotKind::Class => self.classes.iter().map(String::as_str).collect(),
        }
    }
}
