use kgqa::classify::{classify, Classification, DEFAULT_TOP_K};
use kgqa::dataset::TemplateCatalog;
use kgqa::eval::{write_template_report, TemplateReport};
use kgqa::treelstm::ModelBundle;
use rayon::prelude::*;
use serde_json::json;

use super::{gold_template, join, load_parses, load_records, out_dir, pool};
use crate::args::EvalTemplatesArgs;
use crate::config::{existing, pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

pub fn run(a: EvalTemplatesArgs, file: &FileConfig) -> Result<(), Failure> {
    let dataset = existing("dataset", pick(a.dataset, &file.dataset))?;
    let parses_path = existing("parses", pick(a.parses, &file.parses))?;
    let model = existing("model", pick(a.model, &file.model))?;
    let k = pick(a.k, &file.k).unwrap_or(DEFAULT_TOP_K);
    let jobs = pick(a.jobs, &file.jobs).unwrap_or(1);
    let out = out_dir(a.out, file);

    let bundle = ModelBundle::load(&model).class(ErrorClass::Model)?;
    let items = join(load_records(&dataset)?, &load_parses(&parses_path)?)?;
    let golds = items.iter().map(|(r, _)| gold_template(r)).collect::<Result<Vec<_>, _>>()?;
    let hyps = pool(jobs)?.install(|| {
        items
            .par_iter()
            .map(|(_, p)| classify(p, &bundle))
            .collect::<Result<Vec<_>, _>>()
    });
    let hyps = hyps.class(ErrorClass::Model)?;
    let ranked: Vec<Vec<u32>> = hyps.iter().map(|h| h.iter().map(|x| x.template).collect()).collect();
    let catalog = TemplateCatalog::builtin();
    let report = TemplateReport::build(&ranked, &golds, &catalog).class(ErrorClass::Eval)?;
    let predictions: Vec<_> = items
        .iter()
        .zip(hyps)
        .zip(&golds)
        .map(|(((r, _), h), gold)| {
            let c = Classification::new(Some(r.id.clone()), h, k);
            json!({"qid": r.id, "gold": gold, "hypotheses": c.hypotheses})
        })
        .collect();

    let stage = Staging::new(&out)?;
    write_template_report(stage.dir(), &report).class(ErrorClass::Output)?;
    stage.write_json("predictions.json", &predictions)?;
    stage.commit()?;
    println!("{}", report.summary());
    Ok(())
}
