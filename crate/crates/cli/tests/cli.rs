use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clap::CommandFactory;
use kgqa_cli::config::{endpoint_choice, EndpointChoice, FileConfig};
use kgqa_cli::output::Staging;
use kgqa_cli::{Cli, ErrorClass};
use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/qa").join(name)
}

fn kgqa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgqa"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TAGME_TOKEN")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn every_flag_has_help_text() {
    let cli = Cli::command();
    for sub in cli.get_subcommands() {
        assert!(sub.get_about().is_some(), "{} lacks a description", sub.get_name());
        for arg in sub.get_arguments() {
            if matches!(arg.get_id().as_str(), "help" | "version") {
                continue;
            }
            assert!(
                arg.get_help().is_some(),
                "{} --{} has no help",
                sub.get_name(),
                arg.get_id()
            );
        }
    }
}

#[test]
fn help_output_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cli = Cli::command();
    for sub in cli.get_subcommands() {
        let o = kgqa(&[sub.get_name(), "--help"], dir.path());
        assert!(o.status.success());
        let text = stdout(&o);
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(text.contains(&format!("--{long}")), "{} --help misses --{long}", sub.get_name());
            }
        }
    }
}

#[test]
fn stable_flags_exist() {
    let cli = Cli::command();
    let mut longs: Vec<String> = cli
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect::<Vec<_>>())
        .chain(cli.get_arguments().filter_map(|a| a.get_long().map(String::from)))
        .collect();
    longs.sort();
    longs.dedup();
    for flag in [
        "dataset", "parses", "embeddings", "variant", "model", "seed", "k", "endpoint", "mock-store", "lexicon",
        "fixtures", "out", "jobs", "config",
    ] {
        assert!(longs.iter().any(|l| l == flag), "missing --{flag}");
    }
    assert!(!longs.iter().any(|l| l.contains("token") || l.contains("key")));
}

#[test]
fn grad_check_prints_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgqa(&["grad-check", "--out", "gc"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("max rel err "), "{line}");
    assert!(line.contains(" PASS"), "{line}");
    let report = read_json(&dir.path().join("gc/gradcheck.json"));
    assert_eq!(report["instances"].as_array().unwrap().len(), 20);
    assert!(report["max_rel_err"].as_f64().unwrap() < 1e-4);
}

#[test]
fn failing_grad_check_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgqa(&["grad-check", "--tolerance", "1e-30"], dir.path());
    assert_eq!(o.status.code(), Some(ErrorClass::Check.exit_code()));
    assert!(stdout(&o).contains("FAIL"));
    assert!(stderr(&o).starts_with("error[CHECK]: "));
}

fn synthetic_lcquad(n: usize) -> String {
    let catalog = kgqa::dataset::TemplateCatalog::builtin();
    let originals: Vec<u32> = catalog.merge_map().keys().copied().collect();
    let rows: Vec<Value> = (0..n)
        .map(|i| {
            let tid = if i % 10 == 9 { 999 } else { originals[i % originals.len()] };
            serde_json::json!({
                "_id": format!("{i}"),
                "corrected_question": format!("Question number {i} ?"),
                "sparql_query": "SELECT DISTINCT ?uri WHERE { <http://x/r> <http://x/p> ?uri }",
                "sparql_template_id": tid,
            })
        })
        .collect();
    serde_json::to_string(&rows).unwrap()
}

#[test]
fn preprocess_merges_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lcquad.json"), synthetic_lcquad(100)).unwrap();
    let o = kgqa(&["preprocess", "--dataset", "lcquad.json", "--out", "splits"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("splits/summary.json"));
    assert_eq!(summary["kept"], 90);
    assert_eq!(summary["dropped"], 10);
    assert_eq!(summary["train"], 72);
    assert_eq!(summary["test"], 18);
    let train = read_json(&dir.path().join("splits/train.json"));
    assert_eq!(train.as_array().unwrap().len(), 72);
    assert!(stdout(&o).contains("72 train / 18 test"));
}

#[test]
fn missing_required_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgqa(&["preprocess", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[CONFIG]: --dataset"), "{err}");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn unreadable_dataset_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{not json").unwrap();
    let o = kgqa(&["preprocess", "--dataset", "bad.json", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(ErrorClass::Input.exit_code()));
    assert!(stderr(&o).starts_with("error[INPUT]: "));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn endpoint_and_mock_store_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgqa(
        &["eval-qa", "--endpoint", "http://localhost:1/sparql", "--mock-store", s(&corpus("store.nt"))],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let file = FileConfig {
        endpoint: Some("http://localhost:1/sparql".into()),
        mock_store: Some(corpus("store.nt")),
        ..FileConfig::default()
    };
    let e = endpoint_choice(None, None, &file).unwrap_err();
    assert_eq!(e.class, ErrorClass::Config);
    let flag_wins = endpoint_choice(Some("http://h/sparql".into()), None, &file).unwrap();
    assert_eq!(flag_wins, EndpointChoice::Http("http://h/sparql".into()));
}

#[test]
fn config_paths_resolve_against_the_file() {
    let cfg = FileConfig::from_toml("dataset = \"d.json\"\nseed = 4\n[train]\nepochs = 2\n", Path::new("/base")).unwrap();
    assert_eq!(cfg.dataset, Some(PathBuf::from("/base/d.json")));
    assert_eq!(cfg.seed, Some(4));
    let train = cfg.train.unwrap();
    assert_eq!(train.epochs, 2);
    assert_eq!(train.hidden, kgqa::treelstm::TrainConfig::default().hidden);
    let bad = FileConfig::from_toml("datset = \"d.json\"\n", Path::new("/")).unwrap_err();
    assert_eq!(bad.class, ErrorClass::Config);
}

#[test]
fn dropped_staging_leaves_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fresh");
    {
        let stage = Staging::new(&out).unwrap();
        stage.write("a.json", b"{}").unwrap();
    }
    assert!(!out.exists());
    let kept = dir.path().join("kept");
    std::fs::create_dir(&kept).unwrap();
    std::fs::write(kept.join("old.txt"), "x").unwrap();
    {
        let stage = Staging::new(&kept).unwrap();
        stage.write("a.json", b"{}").unwrap();
    }
    let names: Vec<_> = std::fs::read_dir(&kept).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("old.txt")]);
    let stage = Staging::new(&kept).unwrap();
    stage.write("a.json", b"{}").unwrap();
    stage.commit().unwrap();
    assert!(kept.join("a.json").exists());
    assert!(!kept.join(".kgqa-partial").exists());
}

fn qa_args<'a>(out: &'a str, jobs: &'a str) -> Vec<String> {
    [
        "eval-qa",
        "--gold-templates",
        "--dataset",
        s(&corpus("questions.json")),
        "--lexicon",
        s(&corpus("lexicon.json")),
        "--fixtures",
        s(&corpus("linkers.json")),
        "--mock-store",
        s(&corpus("store.nt")),
        "--jobs",
        jobs,
        "--out",
        out,
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[test]
fn eval_qa_on_fixtures_is_perfect_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let one: Vec<String> = qa_args("one", "1");
    let four: Vec<String> = qa_args("four", "4");
    for args in [&one, &four] {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = kgqa(&refs, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let report = read_json(&dir.path().join("one/qa_prf.json"));
    assert_eq!(report["answers"]["n"], 32);
    assert_eq!(report["answers"]["macro"]["f1"], 1.0);
    for name in ["qa_prf.json", "slots.json", "answers.json", "qa.md"] {
        let a = std::fs::read(dir.path().join("one").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("four").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between job counts");
    }
}

fn train(dir: &Path, out: &str) -> Output {
    kgqa(
        &[
            "train",
            "--dataset",
            s(&corpus("questions.json")),
            "--parses",
            s(&corpus("parses.conllu")),
            "--variant",
            "emb-pos-rels-chars",
            "--embeddings",
            s(&corpus("embeddings.vec")),
            "--epochs",
            "2",
            "--hidden",
            "8",
            "--seed",
            "3",
            "--out",
            out,
        ],
        dir,
    )
}

#[test]
fn training_is_reproducible_and_feeds_ask() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = train(dir.path(), out);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["model.kgqa", "epochs.json", "train_summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let model = dir.path().join("a/model.kgqa");
    let o = kgqa(
        &[
            "ask",
            "Who is the mayor of Geneva ?",
            "--parses",
            s(&corpus("parses.conllu")),
            "--model",
            s(&model),
            "--k",
            "15",
            "--lexicon",
            s(&corpus("lexicon.json")),
            "--fixtures",
            s(&corpus("linkers.json")),
            "--mock-store",
            s(&corpus("store.nt")),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let answer: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(answer["qid"], "fx02");
    assert!(answer.get("answers").is_some());
    assert!(answer.get("template").is_some());

    let o = kgqa(
        &[
            "eval-templates",
            "--dataset",
            s(&corpus("questions.json")),
            "--parses",
            s(&corpus("parses.conllu")),
            "--model",
            s(&model),
            "--out",
            "et",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let acc = read_json(&dir.path().join("et/accuracy.json"));
    let curve: Vec<f64> = acc["accuracy_at_k"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(curve.len(), 15);
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(curve[14], 1.0);
    assert_eq!(acc["top1"], acc["confusion_diagonal_ratio"]);
}

#[test]
fn embedding_variant_without_vectors_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = kgqa(
        &[
            "train",
            "--dataset",
            s(&corpus("questions.json")),
            "--parses",
            s(&corpus("parses.conllu")),
            "--variant",
            "emb",
            "--out",
            "t",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[CONFIG]: --variant emb needs --embeddings"));
    assert!(!dir.path().join("t").exists());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "dataset = \"{}\"\nlexicon = \"{}\"\nfixtures = \"{}\"\nmock_store = \"{}\"\nout = \"from-config\"\n",
        s(&corpus("questions.json")),
        s(&corpus("lexicon.json")),
        s(&corpus("linkers.json")),
        s(&corpus("store.nt"))
    );
    std::fs::write(dir.path().join("kgqa.toml"), cfg).unwrap();
    let o = kgqa(&["--config", "kgqa.toml", "eval-qa", "--gold-templates"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-config/qa_prf.json").exists());
    let o = kgqa(&["--config", "kgqa.toml", "eval-qa", "--gold-templates", "--out", "from-flag"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-flag/qa_prf.json").exists());
}
