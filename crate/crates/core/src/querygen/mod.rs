//! Template instantiation, binding enumeration and endpoint querying.

mod answer;
mod binding;
mod endpoint;
mod mock;

pub use answer::AnswerSet;
pub use binding::{enumerate_bindings, instantiate, Binding, BindingStream};
pub use endpoint::{Endpoint, EndpointError, HttpEndpoint, RecordingEndpoint};
pub use mock::{MockServer, MockStore, StoreError};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classify::{classify, ClassifyError, TemplateHypothesis};
use crate::dataset::{QuestionType, Template, TemplateCatalog};
use crate::nlp::ParsedQuestion;
use crate::slots::{EntityLinker, Lexicon, LinkConfig, SlotCandidates, SlotError};
use crate::sparql::{parse_query, QueryResults, SparqlError};
use crate::treelstm::ModelBundle;

/// Queries allowed per (question, template) pair.
pub const DEFAULT_BUDGET: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum QueryGenError {
    #[error("template {template} needs slot {slot}")]
    MissingSlot { template: u32, slot: String },
    #[error("template {template} has no slot {slot}")]
    UnknownSlot { template: u32, slot: String },
    #[error("slot {slot}: malformed IRI {iri:?}")]
    BadIri { slot: String, iri: String },
    #[error("EMPTY_SLOT: no candidates for slot {slot} of template {template}")]
    EmptySlot { template: u32, slot: String },
    #[error("unknown template id {0}")]
    UnknownTemplate(u32),
    #[error("no classifier model loaded")]
    NoModel,
    #[error(transparent)]
    Sparql(#[from] SparqlError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("unexpected result shape: {0}")]
    Answer(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Slots(#[from] SlotError),
}

/// Runs a query and reads its answer according to the query form.
pub fn execute(sparql: &str, endpoint: &dyn Endpoint) -> Result<AnswerSet, QueryGenError> {
    let form = parse_query(sparql)?.form_kind();
    let results = endpoint.query(sparql)?;
    AnswerSet::from_results(form, &results).map_err(QueryGenError::Answer)
}

/// `ASK WHERE {...}` as `SELECT * WHERE {...} LIMIT 1`.
fn existence_query(ask: &str) -> String {
    format!("{} LIMIT 1", ask.replacen("ASK", "SELECT *", 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viable {
    pub binding: Binding,
    pub sparql: String,
    pub answer: AnswerSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Search {
    pub found: Option<Viable>,
    /// Queries sent to the endpoint, existence checks included.
    pub queries: usize,
    /// First binding in enumeration order, if any.
    pub first: Option<Binding>,
}

/// Executes bindings in enumeration order until one yields a nonempty
/// answer, a positive count, or a true ASK whose triple an existence
/// SELECT confirms. Stops after `budget` queries.
pub fn first_viable(
    template: &Template,
    cands: &SlotCandidates,
    endpoint: &dyn Endpoint,
    budget: usize,
) -> Result<Search, QueryGenError> {
    let mut search = Search {
        found: None,
        queries: 0,
        first: None,
    };
    for binding in enumerate_bindings(template, cands)? {
        if search.queries >= budget {
            break;
        }
        if search.first.is_none() {
            search.first = Some(binding.clone());
        }
        let sparql = instantiate(template, &binding)?;
        let answer = execute(&sparql, endpoint)?;
        search.queries += 1;
        let viable = match answer {
            AnswerSet::Boolean { flag: false } => false,
            AnswerSet::Boolean { flag: true } => {
                if search.queries >= budget {
                    break;
                }
                let check = existence_query(&sparql);
                let rows = endpoint.query(&check)?;
                search.queries += 1;
                matches!(rows, QueryResults::Solutions { ref rows, .. } if !rows.is_empty())
            }
            ref a => a.is_nonempty(),
        };
        if viable {
            search.found = Some(Viable {
                binding,
                sparql,
                answer,
            });
            break;
        }
    }
    Ok(search)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Unanswered {
    /// Some required slot had no candidate for every tried template.
    EmptySlot,
    /// Queries ran but none produced a supported answer.
    NoViable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaConfig {
    /// Hypotheses tried per question.
    pub k: usize,
    pub budget: usize,
    pub link: LinkConfig,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            k: crate::classify::DEFAULT_TOP_K,
            budget: DEFAULT_BUDGET,
            link: LinkConfig::default(),
        }
    }
}

/// Everything needed to answer questions end to end.
pub struct QaPipeline<'a> {
    /// Needed only by [`QaPipeline::answer`].
    pub bundle: Option<&'a ModelBundle>,
    pub catalog: &'a TemplateCatalog,
    pub linkers: &'a [Box<dyn EntityLinker>],
    pub lexicon: &'a Lexicon,
    pub endpoint: &'a dyn Endpoint,
    pub config: QaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaOutcome {
    pub qid: Option<String>,
    pub template: Option<u32>,
    pub binding: Option<Binding>,
    pub answers: Option<AnswerSet>,
    pub reason: Option<Unanswered>,
    pub hypotheses: Vec<TemplateHypothesis>,
    pub candidates: SlotCandidates,
    pub queries: usize,
}

impl QaOutcome {
    /// `{"qid", "template", "binding", "answers"}` plus `reason` when unanswered.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "qid": self.qid,
            "template": self.template,
            "binding": self.binding.as_ref().map(|b| &b.slots),
            "answers": self.answers,
        });
        if let Some(r) = self.reason {
            v["reason"] = serde_json::to_value(r).expect("reason serializes");
        }
        v
    }
}

impl QaPipeline<'_> {
    /// Classifies, then tries the top-k templates in rank order.
    pub fn answer(&self, q: &ParsedQuestion) -> Result<QaOutcome, QueryGenError> {
        let bundle = self.bundle.ok_or(QueryGenError::NoModel)?;
        let hyps = classify(q, bundle)?;
        self.answer_with(q.qid.clone(), &q.text, hyps)
    }

    /// Slot filling and querying over given hypotheses.
    pub fn answer_with(
        &self,
        qid: Option<String>,
        text: &str,
        mut hypotheses: Vec<TemplateHypothesis>,
    ) -> Result<QaOutcome, QueryGenError> {
        hypotheses.truncate(self.config.k);
        let candidates = SlotCandidates::gather(text, self.linkers, self.lexicon, &self.config.link)?;
        let mut out = QaOutcome {
            qid,
            template: None,
            binding: None,
            answers: None,
            reason: None,
            hypotheses: hypotheses.clone(),
            candidates,
            queries: 0,
        };
        let mut all_empty = true;
        let mut boolean_fallback = None;
        for h in &hypotheses {
            let template = self
                .catalog
                .get(h.template)
                .ok_or(QueryGenError::UnknownTemplate(h.template))?;
            let search = match first_viable(template, &out.candidates, self.endpoint, self.config.budget) {
                Err(QueryGenError::EmptySlot { template, slot }) => {
                    log::debug!("template {template}: no candidates for {slot}");
                    continue;
                }
                other => other?,
            };
            all_empty = false;
            out.queries += search.queries;
            if let Some(v) = search.found {
                out.template = Some(h.template);
                out.binding = Some(v.binding);
                out.answers = Some(v.answer);
                return Ok(out);
            }
            if template.question_type == QuestionType::Boolean && boolean_fallback.is_none() {
                boolean_fallback = search.first.map(|b| (h.template, b));
            }
        }
        if let Some((template, binding)) = boolean_fallback {
            out.template = Some(template);
            out.binding = Some(binding);
            out.answers = Some(AnswerSet::Boolean { flag: false });
            return Ok(out);
        }
        out.reason = Some(if all_empty { Unanswered::EmptySlot } else { Unanswered::NoViable });
        Ok(out)
    }
}

/// One question end to end.
pub fn answer_question(q: &ParsedQuestion, pipeline: &QaPipeline<'_>) -> Result<QaOutcome, QueryGenError> {
    pipeline.answer(q)
}

#[cfg(test)]
mod tests;
