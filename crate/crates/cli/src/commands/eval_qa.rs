use kgqa::classify::{classify, TemplateHypothesis};
use kgqa::dataset::QuestionRecord;
use kgqa::eval::{write_qa_report, QaReport, QuestionScore, SlotUris};
use kgqa::nlp::ParsedQuestion;
use kgqa::querygen::{AnswerSet, QaPipeline, QueryGenError};
use kgqa::slots::SlotError;
use kgqa::treelstm::ModelBundle;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{gold_template, join, load_parses, load_records, out_dir, pool, qa_setup};
use crate::args::EvalQaArgs;
use crate::config::{existing, pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

pub(crate) fn classify_error(e: QueryGenError) -> Failure {
    let class = match &e {
        QueryGenError::Endpoint(_) => ErrorClass::Endpoint,
        QueryGenError::Slots(SlotError::Lexicon(_)) => ErrorClass::Input,
        QueryGenError::Slots(_) => ErrorClass::Linking,
        QueryGenError::Classify(_) | QueryGenError::NoModel => ErrorClass::Model,
        _ => ErrorClass::Eval,
    };
    Failure::new(class, e)
}

struct Scored {
    score: QuestionScore,
    slots: (SlotUris, String),
    outcome: Value,
}

fn gold_answers(r: &QuestionRecord, pipeline: &QaPipeline<'_>) -> Option<AnswerSet> {
    if let Some(g) = &r.gold_answers {
        return Some(g.clone());
    }
    match pipeline.endpoint.query(&r.gold_sparql) {
        Ok(res) => Some(AnswerSet::from_gold(&res)),
        Err(e) => {
            log::warn!("{}: gold query failed, question skipped: {e}", r.id);
            None
        }
    }
}

fn score_one(
    r: &QuestionRecord,
    parse: Option<&ParsedQuestion>,
    pipeline: &QaPipeline<'_>,
    use_gold_template: bool,
) -> Result<Option<Scored>, Failure> {
    let gold_id = gold_template(r).ok();
    let hyps = match (use_gold_template, parse, pipeline.bundle) {
        (true, _, _) => vec![TemplateHypothesis {
            template: gold_template(r)?,
            prob: 1.0,
            rank: 1,
        }],
        (false, Some(p), Some(b)) => classify(p, b).class(ErrorClass::Model)?,
        _ => return Err(Failure::config("classifying needs --model and --parses")),
    };
    let Some(gold) = gold_answers(r, pipeline) else {
        return Ok(None);
    };
    let (answers, template, binding, reason, outcome) = match pipeline.answer_with(Some(r.id.clone()), &r.text, hyps) {
        Ok(o) => {
            let reason = o.reason.map(|x| serde_json::to_value(x).expect("reason serializes"));
            let reason = reason.and_then(|v| v.as_str().map(String::from));
            (o.answers.clone(), o.template, o.binding.clone(), reason, o.to_json())
        }
        Err(e) => {
            let f = classify_error(e);
            log::warn!("{}: {f}", r.id);
            let msg = format!("{}: {}", f.class.name(), f.detail);
            (None, None, None, Some(msg.clone()), json!({"qid": r.id, "error": msg}))
        }
    };
    let slots = match (&binding, template.and_then(|t| pipeline.catalog.get(t))) {
        (Some(b), Some(t)) => SlotUris::from_binding(b, t),
        _ => SlotUris::default(),
    };
    let mut score = QuestionScore::new(r.id.clone(), answers, gold, gold_id, template);
    score.reason = reason;
    Ok(Some(Scored {
        score,
        slots: (slots, r.gold_sparql.clone()),
        outcome,
    }))
}

pub fn run(a: EvalQaArgs, file: &FileConfig) -> Result<(), Failure> {
    let dataset = existing("dataset", pick(a.dataset, &file.dataset))?;
    let records = load_records(&dataset)?;
    let (items, bundle): (Vec<(QuestionRecord, Option<ParsedQuestion>)>, Option<ModelBundle>) = if a.gold_templates {
        (records.into_iter().map(|r| (r, None)).collect(), None)
    } else {
        let parses = load_parses(&existing("parses", pick(a.parses, &file.parses))?)?;
        let model = existing("model", pick(a.model, &file.model))?;
        let bundle = ModelBundle::load(&model).class(ErrorClass::Model)?;
        let joined = join(records, &parses)?.into_iter().map(|(r, p)| (r, Some(p))).collect();
        (joined, Some(bundle))
    };
    if items.is_empty() {
        return Err(Failure::input("no questions to evaluate"));
    }
    let jobs = pick(a.jobs, &file.jobs).unwrap_or(1);
    let out = out_dir(a.out, file);
    let setup = qa_setup(a.link, a.endpoint, a.k, a.budget, file)?;
    let pipeline = QaPipeline {
        bundle: bundle.as_ref(),
        catalog: &setup.catalog,
        linkers: &setup.linkers,
        lexicon: &setup.lexicon,
        endpoint: setup.endpoint.as_ref(),
        config: setup.config.clone(),
    };
    let scored = pool(jobs)?.install(|| {
        items
            .par_iter()
            .map(|(r, p)| score_one(r, p.as_ref(), &pipeline, a.gold_templates))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let skipped = scored.iter().filter(|s| s.is_none()).count();
    let scored: Vec<Scored> = scored.into_iter().flatten().collect();
    if scored.is_empty() {
        return Err(Failure::new(ErrorClass::Endpoint, "no gold answers could be obtained"));
    }
    let unanswered = scored.iter().filter(|s| s.score.predicted.is_none()).count();
    let slot_items: Vec<_> = scored.iter().map(|s| s.slots.clone()).collect();
    let outcomes: Vec<Value> = scored.iter().map(|s| s.outcome.clone()).collect();
    let report = QaReport::build(scored.into_iter().map(|s| s.score).collect(), &slot_items).class(ErrorClass::Eval)?;

    let stage = Staging::new(&out)?;
    write_qa_report(stage.dir(), &report).class(ErrorClass::Output)?;
    stage.write_json("answers.json", &outcomes)?;
    stage.commit()?;
    println!("{}", report.summary());
    for (kind, s) in &report.slots {
        if let Some(sum) = &s.summary {
            println!("  {kind:?} slots: macro F1 {:.4}, micro F1 {:.4}", sum.macro_avg.f1, sum.micro_avg.f1);
        }
    }
    println!("  unanswered {unanswered}, skipped without gold {skipped}");
    Ok(())
}
