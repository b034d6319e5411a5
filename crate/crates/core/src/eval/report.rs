use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    accuracy_curve, answer_type_confusion, confusion, qa_prf, slot_prf_all, ConfusionMatrix, EvalError, Overlap, Prf,
    PrfSummary, SlotPrf, SlotUris,
};
use crate::dataset::{QuestionType, SlotKind, TemplateCatalog};
use crate::querygen::AnswerSet;

/// Template classification results over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub n: usize,
    /// accuracy@k for k = 1 ..= number of templates.
    pub accuracy_at: Vec<f64>,
    pub confusion: ConfusionMatrix<u32>,
    pub answer_types: ConfusionMatrix<QuestionType>,
}

impl TemplateReport {
    /// `preds[i]` ranks all templates for question `i`.
    pub fn build(preds: &[Vec<u32>], golds: &[u32], catalog: &TemplateCatalog) -> Result<Self, EvalError> {
        let top1: Vec<u32> = preds
            .iter()
            .map(|p| p.first().copied().ok_or(EvalError::Empty))
            .collect::<Result<_, _>>()?;
        Ok(TemplateReport {
            n: golds.len(),
            accuracy_at: accuracy_curve(preds, golds, catalog.len().max(1))?,
            confusion: confusion(&top1, golds, &catalog.ids())?,
            answer_types: answer_type_confusion(&top1, golds, catalog)?,
        })
    }

    pub fn top(&self, k: usize) -> f64 {
        self.accuracy_at[(k.max(1) - 1).min(self.accuracy_at.len() - 1)]
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "n": self.n,
            "top1": self.top(1),
            "top2": self.top(2),
            "accuracy_at_k": self.accuracy_at,
            "confusion_diagonal_ratio": self.confusion.diagonal_ratio(),
            "answer_type_accuracy": self.answer_types.diagonal_ratio(),
            "answer_types": self.answer_types,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Template classification\n\n");
        let _ = writeln!(md, "Questions: {}\n", self.n);
        md.push_str("| k | accuracy |\n|---:|---:|\n");
        for (i, a) in self.accuracy_at.iter().enumerate() {
            let _ = writeln!(md, "| {} | {a:.4} |", i + 1);
        }
        md.push_str("\n## Confusion (rows gold, columns predicted)\n\n");
        md.push_str(&self.confusion.to_markdown());
        md.push_str("\n## Answer types\n\n");
        md.push_str(&self.answer_types.to_markdown());
        md
    }

    /// One-paragraph console summary.
    pub fn summary(&self) -> String {
        format!(
            "{} questions: top-1 {:.4}, top-2 {:.4}, answer type {:.4}\n{}",
            self.n,
            self.top(1),
            self.top(2),
            self.answer_types.diagonal_ratio(),
            self.confusion.to_text()
        )
    }
}

/// One evaluated question of a QA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub qid: String,
    pub gold_template: Option<u32>,
    pub template: Option<u32>,
    pub predicted: Option<AnswerSet>,
    pub gold: AnswerSet,
    pub prf: Prf,
    pub overlap: Overlap,
    pub reason: Option<String>,
}

impl QuestionScore {
    /// An unanswered question counts as an empty prediction.
    pub fn new(
        qid: impl Into<String>,
        predicted: Option<AnswerSet>,
        gold: AnswerSet,
        gold_template: Option<u32>,
        template: Option<u32>,
    ) -> Self {
        let pred_set = predicted.as_ref().map(AnswerSet::as_set).unwrap_or_default();
        let overlap = Overlap::of(&pred_set, &gold.as_set());
        let prf = match &predicted {
            Some(p) => qa_prf(p, &gold),
            None => overlap.prf(),
        };
        QuestionScore {
            qid: qid.into(),
            gold_template,
            template,
            predicted,
            gold,
            prf,
            overlap,
            reason: None,
        }
    }
}

/// End-to-end answer and slot metrics over a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub questions: Vec<QuestionScore>,
    pub answers: PrfSummary,
    pub slots: BTreeMap<SlotKind, SlotPrf>,
}

impl QaReport {
    /// `slot_items` pairs predicted slot URIs with each gold query.
    pub fn build(questions: Vec<QuestionScore>, slot_items: &[(SlotUris, String)]) -> Result<Self, EvalError> {
        let overlaps: Vec<Overlap> = questions.iter().map(|q| q.overlap).collect();
        Ok(QaReport {
            answers: PrfSummary::from_overlaps(&overlaps)?,
            slots: slot_prf_all(slot_items),
            questions,
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Question answering\n\n| scope | macro P | macro R | macro F1 | micro P | micro R | micro F1 | n | skipped |\n|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        let mut row = |name: &str, s: Option<&PrfSummary>, skipped: usize| {
            match s {
                Some(s) => {
                    let (a, i) = (s.macro_avg, s.micro_avg);
                    let _ = writeln!(
                        md,
                        "| {name} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {skipped} |",
                        a.precision, a.recall, a.f1, i.precision, i.recall, i.f1, s.n
                    );
                }
                None => {
                    let _ = writeln!(md, "| {name} | - | - | - | - | - | - | 0 | {skipped} |");
                }
            }
        };
        row("answers", Some(&self.answers), 0);
        for (kind, s) in &self.slots {
            row(&format!("{kind:?}").to_lowercase(), s.summary.as_ref(), s.skipped);
        }
        md
    }

    pub fn summary(&self) -> String {
        let a = self.answers;
        format!(
            "{} questions: macro P {:.4} R {:.4} F1 {:.4}; micro P {:.4} R {:.4} F1 {:.4}",
            a.n,
            a.macro_avg.precision,
            a.macro_avg.recall,
            a.macro_avg.f1,
            a.micro_avg.precision,
            a.micro_avg.recall,
            a.micro_avg.f1
        )
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), EvalError> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn mkdir(dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|source| EvalError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn pretty(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Writes `accuracy.json`, `confusion.csv` and `templates.md` under `dir`.
pub fn write_template_report(dir: &Path, report: &TemplateReport) -> Result<(), EvalError> {
    mkdir(dir)?;
    write(dir, "accuracy.json", &pretty(&report.to_json()))?;
    write(dir, "confusion.csv", &report.confusion.to_csv())?;
    write(dir, "answer_types.csv", &report.answer_types.to_csv())?;
    write(dir, "templates.md", &report.to_markdown())
}

/// Writes `qa_prf.json`, `slots.json` and `qa.md` under `dir`.
pub fn write_qa_report(dir: &Path, report: &QaReport) -> Result<(), EvalError> {
    mkdir(dir)?;
    let qa = json!({
        "answers": report.answers,
        "questions": report.questions,
    });
    write(dir, "qa_prf.json", &pretty(&qa))?;
    let slots: BTreeMap<String, &SlotPrf> = report
        .slots
        .iter()
        .map(|(k, v)| (format!("{k:?}").to_uppercase(), v))
        .collect();
    write(dir, "slots.json", &pretty(&slots))?;
    write(dir, "qa.md", &report.to_markdown())
}
