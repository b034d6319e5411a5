use std::collections::BTreeMap;

use kgqa::dataset::{apply_merge, filter_qald, load_lcquad, load_qald, split_train_test, QuestionRecord, TemplateCatalog};
use serde_json::json;

use super::{out_dir, DEFAULT_SEED};
use crate::args::{DatasetFormat, PreprocessArgs};
use crate::config::{existing, pick, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};
use crate::output::Staging;

const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

fn per_template(records: &[QuestionRecord]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        if let Some(id) = r.merged_template_id {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
}

pub fn run(a: PreprocessArgs, file: &FileConfig) -> Result<(), Failure> {
    let dataset = existing("dataset", pick(a.dataset, &file.dataset))?;
    let seed = pick(a.seed, &file.seed).unwrap_or(DEFAULT_SEED);
    let fraction = pick(a.train_fraction, &file.train_fraction).unwrap_or(DEFAULT_TRAIN_FRACTION);
    let catalog = TemplateCatalog::builtin();
    let out = out_dir(a.out, file);
    match a.format {
        DatasetFormat::Lcquad => {
            let records = load_lcquad(&dataset).class(ErrorClass::Input)?;
            let total = records.len();
            let (kept, dropped) = apply_merge(records, &catalog);
            let (train, test) = split_train_test(&kept, fraction, seed).class(ErrorClass::Config)?;
            let stage = Staging::new(&out)?;
            stage.write_json("train.json", &train)?;
            stage.write_json("test.json", &test)?;
            stage.write_json("dropped.json", &dropped)?;
            stage.write_json(
                "summary.json",
                &json!({
                    "dataset": "LCQUAD",
                    "total": total,
                    "kept": kept.len(),
                    "dropped": dropped.len(),
                    "train": train.len(),
                    "test": test.len(),
                    "train_fraction": fraction,
                    "seed": seed,
                    "templates": catalog.len(),
                    "per_template": per_template(&kept),
                }),
            )?;
            stage.commit()?;
            println!(
                "LC-QuAD: kept {} of {total} questions ({} dropped); split {} train / {} test (seed {seed})",
                kept.len(),
                dropped.len(),
                train.len(),
                test.len()
            );
        }
        DatasetFormat::Qald => {
            let records = load_qald(&dataset).class(ErrorClass::Input)?;
            let total = records.len();
            let (kept, excluded) = filter_qald(records, &catalog);
            let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
            for (_, reason) in &excluded {
                *reasons.entry(reason.to_string()).or_insert(0) += 1;
            }
            let excluded_json: Vec<_> = excluded
                .iter()
                .map(|(r, reason)| json!({"id": r.id, "text": r.text, "reason": reason}))
                .collect();
            let stage = Staging::new(&out)?;
            stage.write_json("kept.json", &kept)?;
            stage.write_json("excluded.json", &excluded_json)?;
            stage.write_json(
                "summary.json",
                &json!({
                    "dataset": "QALD7",
                    "total": total,
                    "kept": kept.len(),
                    "excluded": excluded.len(),
                    "reasons": reasons,
                    "per_template": per_template(&kept),
                }),
            )?;
            stage.commit()?;
            println!("QALD-7: kept {} of {total} questions", kept.len());
            for (reason, n) in &reasons {
                println!("  excluded {reason}: {n}");
            }
        }
    }
    Ok(())
}
