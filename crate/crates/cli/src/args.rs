use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use kgqa::features::FeatureVariant;

pub const VARIANTS: [&str; 5] = ["pos", "pos-rels", "emb", "emb-pos-rels", "emb-pos-rels-chars"];

fn variant_parser() -> impl TypedValueParser<Value = FeatureVariant> {
    PossibleValuesParser::new(VARIANTS).map(|s| s.parse::<FeatureVariant>().expect("listed variant"))
}

/// Template-classification question answering over a knowledge graph.
#[derive(Debug, Parser)]
#[command(name = "kgqa", version, propagate_version = true)]
pub struct Cli {
    /// TOML file with default settings; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a dataset, merge or filter its templates and write record splits.
    Preprocess(PreprocessArgs),
    /// Fit a Tree-LSTM template classifier and write the model bundle.
    Train(TrainArgs),
    /// Classify a split and report top-k accuracy and confusion matrices.
    EvalTemplates(EvalTemplatesArgs),
    /// Answer one question end to end and print the answer as JSON.
    Ask(AskArgs),
    /// Answer a split end to end and report answer and slot precision/recall.
    EvalQa(EvalQaArgs),
    /// Check analytic gradients against finite differences on random trees.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    /// LC-QuAD release JSON.
    Lcquad,
    /// QALD-7 multilingual JSON.
    Qald,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw dataset file.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Layout of the dataset file.
    #[arg(long, value_enum, default_value = "lcquad")]
    pub format: DatasetFormat,
    /// Share of LC-QuAD questions in the training split.
    #[arg(long, value_name = "FRACTION")]
    pub train_fraction: Option<f64>,
    /// Seed of the train/test shuffle.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the split files and summary.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training records (JSON written by `preprocess`).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Dependency parses in CoNLL-U, keyed by `# qid`.
    #[arg(long, value_name = "FILE")]
    pub parses: Option<PathBuf>,
    /// Held-out records scored after every epoch.
    #[arg(long, value_name = "FILE")]
    pub heldout: Option<PathBuf>,
    /// Node features [default: pos-rels].
    #[arg(long, value_parser = variant_parser())]
    pub variant: Option<FeatureVariant>,
    /// Word vectors in text format; required by the emb variants.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Where to write the model bundle [default: <out>/model.kgqa].
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Seed for initialization, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden state size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for the epoch log and summary.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalTemplatesArgs {
    /// Records to classify (JSON written by `preprocess`).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Dependency parses in CoNLL-U, keyed by `# qid`.
    #[arg(long, value_name = "FILE")]
    pub parses: Option<PathBuf>,
    /// Trained model bundle.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Hypotheses listed per question in predictions.json.
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for the reports.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Where queries are sent.
#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// SPARQL endpoint URL.
    #[arg(long, value_name = "URL", conflicts_with = "mock_store")]
    pub endpoint: Option<String>,
    /// N-Triples file served by the in-memory store instead of an endpoint.
    #[arg(long, value_name = "FILE")]
    pub mock_store: Option<PathBuf>,
}

/// How slots are filled.
#[derive(Debug, Args)]
pub struct LinkArgs {
    /// Phrase-to-IRI lexicon for predicates and classes.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Recorded linker responses; replaces the live Spotlight and TagMe services.
    #[arg(long, value_name = "FILE")]
    pub fixtures: Option<PathBuf>,
    /// Base URL of a DBpedia Spotlight service.
    #[arg(long, value_name = "URL")]
    pub spotlight_url: Option<String>,
    /// Base URL of the TagMe service; the token comes from TAGME_TOKEN.
    #[arg(long, value_name = "URL")]
    pub tagme_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// Question text; must match a parse unless --parser-url is given.
    pub question: Option<String>,
    /// Pick the question by id instead of by text.
    #[arg(long)]
    pub qid: Option<String>,
    /// Dependency parses in CoNLL-U.
    #[arg(long, value_name = "FILE")]
    pub parses: Option<PathBuf>,
    /// CoreNLP-compatible server used to parse text with no recorded parse.
    #[arg(long, value_name = "URL")]
    pub parser_url: Option<String>,
    /// Trained model bundle.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    /// Templates tried, best first.
    #[arg(long)]
    pub k: Option<usize>,
    /// Most queries issued per template.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Also write the answer to <out>/answer.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalQaArgs {
    /// Records with gold queries (JSON written by `preprocess`).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Dependency parses in CoNLL-U; not needed with --gold-templates.
    #[arg(long, value_name = "FILE")]
    pub parses: Option<PathBuf>,
    /// Trained model bundle; not needed with --gold-templates.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Use each record's gold template instead of the classifier.
    #[arg(long)]
    pub gold_templates: bool,
    #[command(flatten)]
    pub link: LinkArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    /// Templates tried per question, best first.
    #[arg(long)]
    pub k: Option<usize>,
    /// Most queries issued per template.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for the reports.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Random instances to check.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Largest accepted relative error.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed of the random instances.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-instance results to <out>/gradcheck.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
