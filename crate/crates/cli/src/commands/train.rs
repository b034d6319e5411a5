use kgqa::dataset::TemplateCatalog;
use kgqa::features::{load_embeddings, FeatureVariant};
use kgqa::treelstm::{fit_bundle, Labeled, TrainConfig};
use serde_json::json;

use super::{gold_template, join, load_parses, load_records, out_dir};
use crate::args::TrainArgs;
use crate::config::{existing, existing_opt, pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

pub const DEFAULT_VARIANT: FeatureVariant = FeatureVariant::PosRels;
const MODEL_FILE: &str = "model.kgqa";

fn labeled(
    records: &std::path::Path,
    parses: &std::collections::BTreeMap<String, kgqa::nlp::ParsedQuestion>,
) -> Result<Vec<Labeled>, Failure> {
    join(load_records(records)?, parses)?
        .into_iter()
        .map(|(r, parse)| {
            Ok(Labeled {
                template: gold_template(&r)?,
                parse,
            })
        })
        .collect()
}

pub fn run(a: TrainArgs, file: &FileConfig) -> Result<(), Failure> {
    let dataset = existing("dataset", pick(a.dataset, &file.dataset))?;
    let parses_path = existing("parses", pick(a.parses, &file.parses))?;
    let heldout_path = existing_opt("heldout", pick(a.heldout, &file.heldout))?;
    let variant = match a.variant {
        Some(v) => v,
        None => file.variant()?.unwrap_or(DEFAULT_VARIANT),
    };
    let embeddings_path = existing_opt("embeddings", pick(a.embeddings, &file.embeddings))?;
    if variant.uses_embedding() && embeddings_path.is_none() {
        return Err(Failure::config(format!("--variant {} needs --embeddings", variant.cli_name())));
    }
    let mut config: TrainConfig = file.train.clone().unwrap_or_default();
    if let Some(s) = pick(a.seed, &file.seed) {
        config.seed = s;
    }
    if let Some(j) = pick(a.jobs, &file.jobs) {
        config.jobs = j;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(h) = a.hidden {
        config.hidden = h;
    }
    let out = out_dir(a.out, file);
    let model_path = pick(a.model, &file.model).unwrap_or_else(|| out.join(MODEL_FILE));

    let parses = load_parses(&parses_path)?;
    let train_set = labeled(&dataset, &parses)?;
    let heldout = heldout_path.map(|p| labeled(&p, &parses)).transpose()?;
    let store = match embeddings_path.filter(|_| variant.uses_embedding()) {
        Some(p) => {
            let full = load_embeddings(&p).class(ErrorClass::Input)?;
            let words = train_set
                .iter()
                .chain(heldout.iter().flatten())
                .flat_map(|l| l.parse.tree.nodes().iter().map(|t| t.surface.as_str()));
            Some(full.restrict(words))
        }
        None => None,
    };
    let catalog = TemplateCatalog::builtin();
    let (bundle, log) = fit_bundle(&train_set, heldout.as_deref(), variant, store, &catalog.ids(), &config)
        .class(ErrorClass::Model)?;

    let mut stage = Staging::new(&out)?;
    let staged_model = stage.elsewhere(MODEL_FILE, model_path.clone());
    bundle.save(&staged_model).class(ErrorClass::Output)?;
    stage.write_json("epochs.json", &log)?;
    stage.write_json(
        "train_summary.json",
        &json!({
            "variant": variant.cli_name(),
            "examples": train_set.len(),
            "heldout": heldout.as_ref().map(Vec::len),
            "config": config,
            "final": log.last(),
        }),
    )?;
    stage.commit()?;

    println!("trained {} on {} questions", variant.cli_name(), train_set.len());
    for e in &log {
        let held = match (e.heldout_accuracy, e.heldout_top2) {
            (Some(a1), Some(a2)) => format!(", held-out top-1 {a1:.4} top-2 {a2:.4}"),
            _ => String::new(),
        };
        println!("epoch {}: lr {:.2e}, loss {:.4}{held}", e.epoch, e.lr, e.train_loss);
    }
    println!("model written to {}", model_path.display());
    Ok(())
}
