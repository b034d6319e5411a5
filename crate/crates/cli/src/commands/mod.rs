mod ask;
mod eval_qa;
mod eval_templates;
mod grad_check;
mod preprocess;
mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use kgqa::dataset::{QuestionRecord, TemplateCatalog};
use kgqa::nlp::{read_conllu, ParsedQuestion};
use kgqa::querygen::{Endpoint, HttpEndpoint, MockStore, QaConfig, DEFAULT_BUDGET};
use kgqa::slots::{EntityLinker, FixtureSet, Lexicon, SpotlightClient, TagmeClient};

use crate::args::{Command, EndpointArgs, LinkArgs};
use crate::config::{endpoint_choice, existing, existing_opt, pick, EndpointChoice, FileConfig};
use crate::error::{Classify, ErrorClass, Failure};

pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SPOTLIGHT: &str = "https://api.dbpedia-spotlight.org/en";
pub const DEFAULT_TAGME: &str = "https://tagme.d4science.org/tagme";
const SERVICE_TIMEOUT: Duration = Duration::from_secs(10);

pub fn run(command: Command, file: &FileConfig) -> Result<(), Failure> {
    match command {
        Command::Preprocess(a) => preprocess::run(a, file),
        Command::Train(a) => train::run(a, file),
        Command::EvalTemplates(a) => eval_templates::run(a, file),
        Command::Ask(a) => ask::run(a, file),
        Command::EvalQa(a) => eval_qa::run(a, file),
        Command::GradCheck(a) => grad_check::run(a, file),
    }
}

fn out_dir(flag: Option<PathBuf>, file: &FileConfig) -> PathBuf {
    pick(flag, &file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_records(path: &Path) -> Result<Vec<QuestionRecord>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_parses(path: &Path) -> Result<BTreeMap<String, ParsedQuestion>, Failure> {
    let parses = read_conllu(path).class(ErrorClass::Input)?;
    let mut by_id = BTreeMap::new();
    for p in parses {
        let qid = p
            .qid
            .clone()
            .ok_or_else(|| Failure::input(format!("{}: parse of {:?} has no qid", path.display(), p.text)))?;
        by_id.insert(qid, p);
    }
    Ok(by_id)
}

/// Records paired with their parses; records without a parse are skipped.
fn join(records: Vec<QuestionRecord>, parses: &BTreeMap<String, ParsedQuestion>) -> Result<Vec<(QuestionRecord, ParsedQuestion)>, Failure> {
    let total = records.len();
    let joined: Vec<_> = records
        .into_iter()
        .filter_map(|r| parses.get(&r.id).cloned().map(|p| (r, p)))
        .collect();
    if joined.is_empty() {
        return Err(Failure::input("no record has a matching parse"));
    }
    if joined.len() < total {
        log::warn!("{} of {total} records have no parse and are skipped", total - joined.len());
    }
    Ok(joined)
}

fn gold_template(r: &QuestionRecord) -> Result<u32, Failure> {
    r.merged_template_id
        .ok_or_else(|| Failure::input(format!("record {} has no template id", r.id)))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::config(format!("--jobs: {e}")))
}

/// Everything but the model that question answering needs.
struct QaSetup {
    catalog: TemplateCatalog,
    linkers: Vec<Box<dyn EntityLinker>>,
    lexicon: Lexicon,
    endpoint: Box<dyn Endpoint>,
    config: QaConfig,
}

fn qa_setup(
    link: LinkArgs,
    endpoint: EndpointArgs,
    k: Option<usize>,
    budget: Option<usize>,
    file: &FileConfig,
) -> Result<QaSetup, Failure> {
    let lexicon_path = existing("lexicon", pick(link.lexicon, &file.lexicon))?;
    let lexicon = Lexicon::load(&lexicon_path).class(ErrorClass::Input)?;
    let linkers: Vec<Box<dyn EntityLinker>> = match existing_opt("fixtures", pick(link.fixtures, &file.fixtures))? {
        Some(path) => FixtureSet::load(&path).class(ErrorClass::Input)?.linkers(),
        None => {
            let link_cfg = file.link.clone().unwrap_or_default();
            let spotlight = pick(link.spotlight_url, &file.spotlight_url).unwrap_or_else(|| DEFAULT_SPOTLIGHT.into());
            let mut live: Vec<Box<dyn EntityLinker>> = Vec::new();
            let tagme = pick(link.tagme_url, &file.tagme_url).unwrap_or_else(|| DEFAULT_TAGME.into());
            match TagmeClient::from_env(tagme, SERVICE_TIMEOUT) {
                Ok(c) => live.push(Box::new(c)),
                Err(e) => log::warn!("TagMe disabled: {e}"),
            }
            live.push(Box::new(SpotlightClient::new(
                spotlight,
                link_cfg.spotlight_confidence,
                SERVICE_TIMEOUT,
            )));
            live
        }
    };
    let endpoint: Box<dyn Endpoint> = match endpoint_choice(endpoint.endpoint, endpoint.mock_store, file)? {
        EndpointChoice::Http(url) => Box::new(HttpEndpoint::new(url)),
        EndpointChoice::Mock(path) => Box::new(MockStore::load(&path).class(ErrorClass::Input)?),
    };
    let mut config = QaConfig {
        k: pick(k, &file.k).unwrap_or(kgqa::classify::DEFAULT_TOP_K),
        budget: pick(budget, &file.budget).unwrap_or(DEFAULT_BUDGET),
        ..QaConfig::default()
    };
    if let Some(l) = &file.link {
        config.link = l.clone();
    }
    if config.k == 0 {
        return Err(Failure::config("--k must be at least 1"));
    }
    Ok(QaSetup {
        catalog: TemplateCatalog::builtin(),
        linkers,
        lexicon,
        endpoint,
        config,
    })
}
