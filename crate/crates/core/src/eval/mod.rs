//! Template accuracy, confusion matrices and answer/slot precision-recall.

mod confusion;
mod report;

pub use confusion::ConfusionMatrix;
pub use report::{write_qa_report, write_template_report, QaReport, QuestionScore, TemplateReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{QuestionType, SlotKind, Template, TemplateCatalog};
use crate::querygen::{AnswerSet, Binding};
use crate::sparql::{parse_query, SparqlError, Term, RDF_TYPE};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("label {0} is not in the label set")]
    UnknownLabel(String),
    #[error("template {0} is not in the catalog")]
    UnknownTemplate(u32),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn check_lengths(preds: usize, golds: usize) -> Result<(), EvalError> {
    if preds != golds {
        return Err(EvalError::LengthMismatch { preds, golds });
    }
    if golds == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Fraction of questions whose gold id is among the first `k` ranked ids.
pub fn accuracy(preds: &[Vec<u32>], golds: &[u32], k: usize) -> Result<f64, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.iter().take(k).any(|id| id == *g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// accuracy@1 ..= accuracy@max_k.
pub fn accuracy_curve(preds: &[Vec<u32>], golds: &[u32], max_k: usize) -> Result<Vec<f64>, EvalError> {
    (1..=max_k).map(|k| accuracy(preds, golds, k)).collect()
}

/// Gold-by-predicted counts over template ids.
pub fn confusion(preds: &[u32], golds: &[u32], labels: &[u32]) -> Result<ConfusionMatrix<u32>, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    ConfusionMatrix::from_pairs(labels.to_vec(), golds.iter().copied().zip(preds.iter().copied()))
}

/// Confusion over ENTITY, COUNT and BOOLEAN.
pub fn answer_type_confusion(
    preds: &[u32],
    golds: &[u32],
    catalog: &TemplateCatalog,
) -> Result<ConfusionMatrix<QuestionType>, EvalError> {
    check_lengths(preds.len(), golds.len())?;
    let ty = |id: u32| catalog.question_type(id).ok_or(EvalError::UnknownTemplate(id));
    let pairs = golds
        .iter()
        .zip(preds)
        .map(|(&g, &p)| Ok((ty(g)?, ty(p)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    ConfusionMatrix::from_pairs(
        vec![QuestionType::Entity, QuestionType::Count, QuestionType::Boolean],
        pairs,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }

    pub const PERFECT: Prf = Prf {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };

    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

/// Overlap counts of one predicted/gold set pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Overlap {
    pub fn of(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> Self {
        let tp = pred.intersection(gold).count();
        Overlap {
            tp,
            fp: pred.len() - tp,
            fn_: gold.len() - tp,
        }
    }

    /// P and R from counts. Both sides empty scores 1,1,1; an empty side
    /// against a nonempty one scores 0 on that side.
    pub fn prf(&self) -> Prf {
        let predicted = self.tp + self.fp;
        let gold = self.tp + self.fn_;
        if predicted == 0 && gold == 0 {
            return Prf::PERFECT;
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Prf::new(ratio(self.tp, predicted), ratio(self.tp, gold))
    }
}

impl std::ops::Add for Overlap {
    type Output = Overlap;
    fn add(self, o: Overlap) -> Overlap {
        Overlap {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn set_prf(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> Prf {
    Overlap::of(pred, gold).prf()
}

/// Per-question answer PRF. Booleans and counts compare as singleton sets.
pub fn qa_prf(pred: &AnswerSet, gold: &AnswerSet) -> Prf {
    set_prf(&pred.as_set(), &gold.as_set())
}

/// Macro and micro averages over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub n: usize,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    #[serde(rename = "micro")]
    pub micro_avg: Prf,
    pub totals: Overlap,
}

impl PrfSummary {
    /// Macro P, R and F are means of the per-question values. Micro pools
    /// the counts first.
    pub fn from_overlaps(items: &[Overlap]) -> Result<Self, EvalError> {
        if items.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = items.len() as f64;
        let per: Vec<Prf> = items.iter().map(Overlap::prf).collect();
        let mean = |f: fn(&Prf) -> f64| per.iter().map(f).sum::<f64>() / n;
        let totals = items.iter().copied().fold(Overlap::default(), |a, b| a + b);
        Ok(PrfSummary {
            n: items.len(),
            macro_avg: Prf {
                precision: mean(|p| p.precision),
                recall: mean(|p| p.recall),
                f1: mean(|p| p.f1),
            },
            micro_avg: totals.prf(),
            totals,
        })
    }
}

/// Constant URIs of a query grouped by slot kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotUris {
    pub resources: BTreeSet<String>,
    pub predicates: BTreeSet<String>,
    pub classes: BTreeSet<String>,
}

impl SlotUris {
    pub fn of_kind(&self, kind: SlotKind) -> &BTreeSet<String> {
        match kind {
            SlotKind::Resource => &self.resources,
            SlotKind::Predicate => &self.predicates,
            SlotKind::Class => &self.classes,
        }
    }

    fn of_kind_mut(&mut self, kind: SlotKind) -> &mut BTreeSet<String> {
        match kind {
            SlotKind::Resource => &mut self.resources,
            SlotKind::Predicate => &mut self.predicates,
            SlotKind::Class => &mut self.classes,
        }
    }

    /// Constants in the gold query's triple patterns: objects of `rdf:type`
    /// are classes, other subjects and objects resources, other predicates
    /// predicates.
    pub fn from_sparql(sparql: &str) -> Result<Self, SparqlError> {
        let q = parse_query(sparql)?;
        let mut out = SlotUris::default();
        for (t, _) in q.pattern.triples() {
            if t.predicate.as_iri() == Some(RDF_TYPE) {
                if let Some(c) = t.object.as_iri() {
                    out.classes.insert(c.to_string());
                }
                if let Some(s) = t.subject.as_iri() {
                    out.resources.insert(s.to_string());
                }
                continue;
            }
            if let Some(p) = t.predicate.as_iri() {
                out.predicates.insert(p.to_string());
            }
            for term in [&t.subject, &t.object] {
                if let Term::Iri(iri) = term {
                    out.resources.insert(iri.clone());
                }
            }
        }
        Ok(out)
    }

    /// URIs a binding puts into each slot kind of its template.
    pub fn from_binding(binding: &Binding, template: &Template) -> Self {
        let mut out = SlotUris::default();
        for slot in &template.slots {
            if let Some(iri) = binding.get(&slot.name) {
                out.of_kind_mut(slot.kind).insert(iri.to_string());
            }
        }
        out
    }
}

/// Slot metrics for one kind over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPrf {
    pub kind: SlotKind,
    pub summary: Option<PrfSummary>,
    /// Questions dropped because their gold query did not parse.
    pub skipped: usize,
}

/// Compares predicted slot URIs of one kind against gold queries.
pub fn slot_prf(items: &[(SlotUris, String)], kind: SlotKind) -> SlotPrf {
    let mut overlaps = Vec::with_capacity(items.len());
    let mut skipped = 0;
    for (pred, gold_sparql) in items {
        match SlotUris::from_sparql(gold_sparql) {
            Ok(gold) => overlaps.push(Overlap::of(pred.of_kind(kind), gold.of_kind(kind))),
            Err(e) => {
                log::warn!("skipping unparseable gold query: {e}");
                skipped += 1;
            }
        }
    }
    SlotPrf {
        kind,
        summary: PrfSummary::from_overlaps(&overlaps).ok(),
        skipped,
    }
}

/// `slot_prf` for all three kinds.
pub fn slot_prf_all(items: &[(SlotUris, String)]) -> BTreeMap<SlotKind, SlotPrf> {
    [SlotKind::Resource, SlotKind::Predicate, SlotKind::Class]
        .into_iter()
        .map(|k| (k, slot_prf(items, k)))
        .collect()
}
