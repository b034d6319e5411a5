use std::time::Duration;

use kgqa::nlp::{read_conllu, ParseServerClient, ParsedQuestion};
use kgqa::querygen::QaPipeline;
use kgqa::treelstm::ModelBundle;

use super::qa_setup;
use crate::args::AskArgs;
use crate::config::{existing, existing_opt, pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

const PARSER_TIMEOUT: Duration = Duration::from_secs(30);

fn question(a: &AskArgs, file: &FileConfig) -> Result<ParsedQuestion, Failure> {
    let parses = match existing_opt("parses", pick(a.parses.clone(), &file.parses))? {
        Some(p) => read_conllu(&p).class(ErrorClass::Input)?,
        None => Vec::new(),
    };
    if let Some(qid) = &a.qid {
        return parses
            .into_iter()
            .find(|p| p.qid.as_deref() == Some(qid.as_str()))
            .ok_or_else(|| Failure::input(format!("no parse with qid {qid}")));
    }
    let Some(text) = a.question.as_deref().map(str::trim) else {
        return match <[ParsedQuestion; 1]>::try_from(parses) {
            Ok([only]) => Ok(only),
            Err(_) => Err(Failure::config("give a question or --qid")),
        };
    };
    if let Some(p) = parses.into_iter().find(|p| p.text.trim() == text) {
        return Ok(p);
    }
    match pick(a.parser_url.clone(), &file.parser_url) {
        Some(url) => ParseServerClient::new(url, PARSER_TIMEOUT)
            .parse(None, text)
            .class(ErrorClass::Input),
        None => Err(Failure::input(format!(
            "no recorded parse for {text:?}; pass --parses with it or --parser-url"
        ))),
    }
}

pub fn run(a: AskArgs, file: &FileConfig) -> Result<(), Failure> {
    let q = question(&a, file)?;
    let model = existing("model", pick(a.model, &file.model))?;
    let bundle = ModelBundle::load(&model).class(ErrorClass::Model)?;
    let setup = qa_setup(a.link, a.endpoint, a.k, a.budget, file)?;
    let pipeline = QaPipeline {
        bundle: Some(&bundle),
        catalog: &setup.catalog,
        linkers: &setup.linkers,
        lexicon: &setup.lexicon,
        endpoint: setup.endpoint.as_ref(),
        config: setup.config.clone(),
    };
    let outcome = pipeline.answer(&q).map_err(super::eval_qa::classify_error)?;
    let json = outcome.to_json();
    if let Some(out) = pick(a.out, &file.out) {
        let stage = Staging::new(&out)?;
        stage.write_json("answer.json", &json)?;
        stage.commit()?;
    }
    println!("{}", serde_json::to_string_pretty(&json).expect("answer serializes"));
    Ok(())
}
