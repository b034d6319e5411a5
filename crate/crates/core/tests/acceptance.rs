//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Criteria that need the LC-QuAD / QALD-7 releases report
//! BLOCKED when the data directory is absent; see the README for its layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kgqa::classify::{classify, TemplateHypothesis};
use kgqa::dataset::{
    apply_merge, filter_qald, load_lcquad, load_qald, split_train_test, QuestionRecord, TemplateCatalog,
};
use kgqa::eval::{accuracy, confusion, qa_prf, set_prf, Prf, QaReport, QuestionScore, TemplateReport};
use kgqa::features::{load_embeddings, FeatureVariant};
use kgqa::nlp::{build_tree, read_conllu, read_conllu_lenient, ParsedQuestion, Token};
use kgqa::querygen::{
    enumerate_bindings, first_viable, instantiate, AnswerSet, MockStore, QaConfig, QaPipeline, RecordingEndpoint,
};
use kgqa::slots::{FixtureSet, Lexicon, SlotCandidates};
use kgqa::treelstm::{
    fit_bundle, forward_states, random_gradient_checks, Activation, Gate, GradCheckSpec, Labeled, ModelBundle,
    ModelDims, ParamId, TrainConfig, TreeLstmParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_SECONDS: f64 = 10.0;
const LSTM_TOLERANCE: f64 = 1e-12;
const LCQUAD_TOTAL: usize = 5000;
const LCQUAD_KEPT: usize = 4920;
const SPLIT: (usize, usize) = (3936, 984);
const TEMPLATE_IDS: [u32; 15] = [1, 2, 3, 5, 6, 7, 8, 11, 15, 16, 101, 105, 106, 111, 151];
const MIN_TOP1: f64 = 0.78;
const MIN_TOP2: f64 = 0.90;
const QALD_TOP1: f64 = 0.618;
const QALD_TOP2: f64 = 0.786;
const QALD_BAND: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Blocked,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Pass,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Fail,
        detail: detail.into(),
    }
}

fn blocked(detail: impl Into<String>) -> Outcome {
    Outcome {
        status: Status::Blocked,
        detail: detail.into(),
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        pass(detail)
    } else {
        fail(detail)
    }
}

fn workspace() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

fn corpus(name: &str) -> PathBuf {
    workspace().join("fixtures/qa").join(name)
}

/// `KGQA_DATA_DIR`, else `data/` at the workspace root.
fn data_dir() -> PathBuf {
    std::env::var_os("KGQA_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("data"))
}

fn data_file(name: &str) -> Option<PathBuf> {
    let p = data_dir().join(name);
    p.exists().then_some(p)
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let spec = GradCheckSpec {
        tolerance: GRAD_TOLERANCE,
        ..GradCheckSpec::default()
    };
    let reports = match random_gradient_checks(&spec) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    verdict(
        reports.len() == 20 && worst < GRAD_TOLERANCE && secs < GRAD_SECONDS,
        format!("{} instances, max rel err {worst:.2e} (< {GRAD_TOLERANCE:.0e}), {secs:.2} s (< {GRAD_SECONDS} s)", reports.len()),
    )
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm_step(p: &TreeLstmParams, x: &[f64]) -> Vec<f64> {
    let pre = |g: Gate| {
        let w = p.get(ParamId::InputWeights(g));
        let b = p.get(ParamId::Bias(g)).data();
        (0..w.rows())
            .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[r])
            .collect::<Vec<_>>()
    };
    let (i, o, u) = (pre(Gate::Input), pre(Gate::Output), pre(Gate::Update));
    (0..i.len()).map(|k| sig(o[k]) * (sig(i[k]) * u[k].tanh()).tanh()).collect()
}

fn lstm_reduction() -> Outcome {
    let dims = ModelDims {
        input: 6,
        hidden: 5,
        classes: 3,
        embedding: 0,
    };
    let tree = build_tree(vec![Token::new(1, "w", "NN", "root", 0)]).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut p = TreeLstmParams::init(dims, Activation::Tanh, None, &mut rng);
        for g in Gate::ALL {
            p.get_mut(ParamId::Bias(g))
                .data_mut()
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..dims.input).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let got = match forward_states(&p, &tree, std::slice::from_ref(&x)) {
            Ok(s) => s[0].h.clone(),
            Err(e) => return fail(e.to_string()),
        };
        for (a, b) in got.iter().zip(lstm_step(&p, &x)) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        worst <= LSTM_TOLERANCE,
        format!("50 single-node trees, max |diff| {worst:.1e} (<= {LSTM_TOLERANCE:.0e})"),
    )
}

fn lcquad_records() -> Option<Vec<QuestionRecord>> {
    if let Some(p) = data_file("lcquad.json") {
        return load_lcquad(&p).ok();
    }
    let (train, test) = (data_file("train-data.json")?, data_file("test-data.json")?);
    let mut all = load_lcquad(&train).ok()?;
    all.extend(load_lcquad(&test).ok()?);
    Some(all)
}

fn preprocessing_counts() -> Outcome {
    let catalog = TemplateCatalog::builtin();
    let mut ids = catalog.ids();
    ids.sort_unstable();
    let catalog_ok = ids == TEMPLATE_IDS;
    let dummy: Vec<usize> = (0..LCQUAD_KEPT).collect();
    let (tr, te) = split_train_test(&dummy, 0.8, 1).unwrap();
    let split_ok = (tr.len(), te.len()) == SPLIT;
    let mut detail = format!(
        "catalog {} ids {}; {LCQUAD_KEPT} x 0.8 -> {}/{} {}",
        catalog.len(),
        if catalog_ok { "match" } else { "MISMATCH" },
        tr.len(),
        te.len(),
        if split_ok { "ok" } else { "MISMATCH" }
    );
    if !(catalog_ok && split_ok) {
        return fail(detail);
    }
    match lcquad_records() {
        None => blocked(format!("{detail}; {LCQUAD_TOTAL} -> {LCQUAD_KEPT} needs LC-QuAD under {}", data_dir().display())),
        Some(records) => {
            let total = records.len();
            let (kept, _) = apply_merge(records, &catalog);
            let (tr, te) = split_train_test(&kept, 0.8, 1).unwrap();
            detail.push_str(&format!("; LC-QuAD {total} -> {} kept, split {}/{}", kept.len(), tr.len(), te.len()));
            verdict(total == LCQUAD_TOTAL && kept.len() == LCQUAD_KEPT && (tr.len(), te.len()) == SPLIT, detail)
        }
    }
}

fn labeled(records: &[QuestionRecord], parses: &BTreeMap<String, ParsedQuestion>) -> Vec<Labeled> {
    records
        .iter()
        .filter_map(|r| {
            Some(Labeled {
                parse: parses.get(&r.id)?.clone(),
                template: r.merged_template_id?,
            })
        })
        .collect()
}

fn parses_by_id(path: &Path) -> BTreeMap<String, ParsedQuestion> {
    let (good, _) = read_conllu_lenient(path).unwrap_or_default();
    good.into_iter().filter_map(|p| Some((p.qid.clone()?, p))).collect()
}

fn template_report(bundle: &ModelBundle, items: &[Labeled], catalog: &TemplateCatalog) -> Result<TemplateReport, String> {
    let preds: Vec<Vec<u32>> = items
        .iter()
        .map(|l| classify(&l.parse, bundle).map(|h| h.into_iter().map(|x| x.template).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let golds: Vec<u32> = items.iter().map(|l| l.template).collect();
    TemplateReport::build(&preds, &golds, catalog).map_err(|e| e.to_string())
}

struct Trained {
    name: String,
    report: TemplateReport,
}

/// Models and reports shared by the classification criteria.
#[derive(Default)]
struct Runs {
    reports: Vec<Trained>,
    lcquad_model: Option<ModelBundle>,
}

fn classification_reproduction(runs: &mut Runs) -> Outcome {
    let (Some(records), Some(parses), Some(emb)) =
        (lcquad_records(), data_file("lcquad.conllu"), data_file("embeddings.vec"))
    else {
        return blocked(format!(
            "needs lcquad.json (or train-data.json + test-data.json), lcquad.conllu and embeddings.vec under {}",
            data_dir().display()
        ));
    };
    let catalog = TemplateCatalog::builtin();
    let (kept, _) = apply_merge(records, &catalog);
    let (train, test) = split_train_test(&kept, 0.8, 1).unwrap();
    let parses = parses_by_id(&parses);
    let (train, test) = (labeled(&train, &parses), labeled(&test, &parses));
    let store = match load_embeddings(&emb) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let words: Vec<String> = train
        .iter()
        .chain(&test)
        .flat_map(|l| l.parse.tree.nodes().iter().map(|t| t.surface.clone()))
        .collect();
    let store = store.restrict(words.iter().map(String::as_str));
    let config = TrainConfig::default();
    let mut accs = BTreeMap::new();
    for (variant, emb) in [
        (FeatureVariant::FasttextPosRelsChars, Some(store)),
        (FeatureVariant::Pos, None),
    ] {
        let (bundle, _) = match fit_bundle(&train, None, variant, emb, &catalog.ids(), &config) {
            Ok(b) => b,
            Err(e) => return fail(e.to_string()),
        };
        let report = match template_report(&bundle, &test, &catalog) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        accs.insert(variant.cli_name(), (report.top(1), report.top(2)));
        runs.reports.push(Trained {
            name: format!("LC-QuAD test / {}", variant.cli_name()),
            report,
        });
        if variant == FeatureVariant::FasttextPosRelsChars {
            runs.lcquad_model = Some(bundle);
        }
    }
    let (t1, t2) = accs["emb-pos-rels-chars"];
    let (p1, _) = accs["pos"];
    verdict(
        t1 >= MIN_TOP1 && t2 >= MIN_TOP2 && t1 >= p1,
        format!(
            "{} train / {} test parsed; top-1 {t1:.4} (>= {MIN_TOP1}), top-2 {t2:.4} (>= {MIN_TOP2}), pos-only top-1 {p1:.4}",
            train.len(),
            test.len()
        ),
    )
}

fn qald_transfer(runs: &mut Runs) -> Outcome {
    let Some(bundle) = runs.lcquad_model.as_ref() else {
        return blocked("needs the LC-QuAD model of criterion 4");
    };
    let (Some(qald), Some(parses)) = (data_file("qald7-train.json"), data_file("qald7.conllu")) else {
        return blocked(format!("needs qald7-train.json and qald7.conllu under {}", data_dir().display()));
    };
    let catalog = TemplateCatalog::builtin();
    let records = match load_qald(&qald) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let (kept, _) = filter_qald(records, &catalog);
    let items = labeled(&kept, &parses_by_id(&parses));
    let report = match template_report(bundle, &items, &catalog) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let (t1, t2) = (report.top(1), report.top(2));
    runs.reports.push(Trained {
        name: "QALD-7 train subset".into(),
        report,
    });
    verdict(
        (t1 - QALD_TOP1).abs() <= QALD_BAND && (t2 - QALD_TOP2).abs() <= QALD_BAND,
        format!(
            "{} questions; top-1 {t1:.4} ({QALD_TOP1} +- {QALD_BAND}), top-2 {t2:.4} ({QALD_TOP2} +- {QALD_BAND})",
            items.len()
        ),
    )
}

fn fixture_records() -> Vec<QuestionRecord> {
    serde_json::from_str(&std::fs::read_to_string(corpus("questions.json")).unwrap()).unwrap()
}

fn fixture_items() -> Vec<Labeled> {
    let parses: BTreeMap<String, ParsedQuestion> = read_conllu(&corpus("parses.conllu"))
        .unwrap()
        .into_iter()
        .map(|p| (p.qid.clone().unwrap(), p))
        .collect();
    labeled(&fixture_records(), &parses)
}

fn fixture_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        hidden: 12,
        seed: 5,
        jobs: 1,
        ..TrainConfig::default()
    }
}

fn fit_fixture_model() -> Result<ModelBundle, String> {
    let store = load_embeddings(&corpus("embeddings.vec")).map_err(|e| e.to_string())?;
    let catalog = TemplateCatalog::builtin();
    fit_bundle(
        &fixture_items(),
        None,
        FeatureVariant::FasttextPosRelsChars,
        Some(store),
        &catalog.ids(),
        &fixture_config(),
    )
    .map(|(b, _)| b)
    .map_err(|e| e.to_string())
}

fn top_k_monotone(runs: &mut Runs) -> Outcome {
    let catalog = TemplateCatalog::builtin();
    match fit_fixture_model().and_then(|b| template_report(&b, &fixture_items(), &catalog)) {
        Ok(report) => runs.reports.push(Trained {
            name: "fixture corpus".into(),
            report,
        }),
        Err(e) => return fail(e),
    }
    let bad: Vec<&str> = runs
        .reports
        .iter()
        .filter(|t| {
            let a = &t.report.accuracy_at;
            a.len() != 15 || a.windows(2).any(|w| w[0] > w[1]) || a[14] != 1.0
        })
        .map(|t| t.name.as_str())
        .collect();
    let names: Vec<&str> = runs.reports.iter().map(|t| t.name.as_str()).collect();
    verdict(
        bad.is_empty(),
        format!("acc@1 <= ... <= acc@15 = 1 on {} run(s) [{}]{}", names.len(), names.join(", "), if bad.is_empty() { String::new() } else { format!("; violated by {bad:?}") }),
    )
}

fn offline_pipeline() -> Outcome {
    let catalog = TemplateCatalog::builtin();
    let store = MockStore::load(&corpus("store.nt")).unwrap();
    let fixtures = FixtureSet::load(&corpus("linkers.json")).unwrap();
    let linkers = fixtures.clone().linkers();
    let lexicon = Lexicon::load(&corpus("lexicon.json")).unwrap();
    let pipeline = QaPipeline {
        bundle: None,
        catalog: &catalog,
        linkers: &linkers,
        lexicon: &lexicon,
        endpoint: &store,
        config: QaConfig::default(),
    };
    let records = fixture_records();
    let mut scores = Vec::new();
    let mut order_violations = Vec::new();
    let mut recorded = 0;
    for r in &records {
        let gold_id = r.merged_template_id.unwrap();
        let hyps = vec![TemplateHypothesis {
            template: gold_id,
            prob: 1.0,
            rank: 1,
        }];
        let out = match pipeline.answer_with(Some(r.id.clone()), &r.text, hyps) {
            Ok(o) => o,
            Err(e) => return fail(format!("{}: {e}", r.id)),
        };
        scores.push(QuestionScore::new(
            r.id.clone(),
            out.answers,
            r.gold_answers.clone().unwrap(),
            Some(gold_id),
            out.template,
        ));

        let template = catalog.get(gold_id).unwrap();
        let cands = SlotCandidates::gather(&r.text, &linkers, &lexicon, &QaConfig::default().link).unwrap();
        let rec = RecordingEndpoint::new(&store);
        let search = first_viable(template, &cands, &rec, QaConfig::default().budget).unwrap();
        let issued: Vec<String> = rec.queries().into_iter().filter(|q| !q.starts_with("SELECT * ")).collect();
        let expected: Vec<String> = enumerate_bindings(template, &cands)
            .unwrap()
            .take(issued.len())
            .map(|b| instantiate(template, &b).unwrap())
            .collect();
        recorded += rec.queries().len();
        if issued != expected || rec.queries().len() != search.queries {
            order_violations.push(r.id.clone());
        }
    }
    let report = QaReport::build(scores, &[]).unwrap();
    let mut per_template: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &records {
        *per_template.entry(r.merged_template_id.unwrap()).or_insert(0) += 1;
    }
    let coverage_ok = records.len() >= 30 && per_template.len() == 15 && per_template.values().all(|&n| n >= 2);
    let f1 = report.answers.macro_avg.f1;
    verdict(
        coverage_ok && f1 == 1.0 && order_violations.is_empty(),
        format!(
            "{} questions over {} templates (min {} each); macro F1 {f1:.4}; {recorded} recorded queries in enumeration order{}",
            records.len(),
            per_template.len(),
            per_template.values().min().unwrap_or(&0),
            if order_violations.is_empty() { String::new() } else { format!("; out of order: {order_violations:?}") }
        ),
    )
}

fn metric_truths(runs: &Runs) -> Outcome {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<std::collections::BTreeSet<_>>();
    let partial = set_prf(&set(&["a"]), &set(&["a", "b"]));
    let partial_ok = partial == Prf {
        precision: 1.0,
        recall: 0.5,
        f1: 2.0 / 3.0,
    };
    let empty_ok = qa_prf(&AnswerSet::empty(), &AnswerSet::empty()) == Prf::PERFECT;
    let mut cross = Vec::new();
    for t in &runs.reports {
        cross.push((t.name.clone(), (t.report.confusion.diagonal_ratio() - t.report.top(1)).abs() < 1e-15));
    }
    let preds = vec![vec![1, 2], vec![2, 1], vec![2, 1]];
    let golds = [1, 1, 2];
    let top1: Vec<u32> = preds.iter().map(|p| p[0]).collect();
    let m = confusion(&top1, &golds, &[1, 2]).unwrap();
    cross.push(("hand example".into(), m.diagonal_ratio() == accuracy(&preds, &golds, 1).unwrap()));
    let cross_ok = cross.iter().all(|(_, ok)| *ok);
    verdict(
        partial_ok && empty_ok && cross_ok,
        format!(
            "({{a}} vs {{a,b}}) = ({}, {}, {:.6}); both empty = {:?}; diagonal/N = acc@1 on {} run(s)",
            partial.precision,
            partial.recall,
            partial.f1,
            (empty_ok as u8, empty_ok as u8, empty_ok as u8),
            cross.len()
        ),
    )
}

fn determinism() -> Outcome {
    match (fit_fixture_model(), fit_fixture_model()) {
        (Ok(a), Ok(b)) => {
            let (a, b) = (a.to_bytes(), b.to_bytes());
            verdict(a == b, format!("two seeded single-threaded fits: {} bytes each, identical = {}", a.len(), a == b))
        }
        (Err(e), _) | (_, Err(e)) => fail(e),
    }
}

fn main() {
    // Only the libtest flags cargo may pass are tolerated; filtering is not supported.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut runs = Runs::default();
    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "gradient oracle", gradient_oracle()),
        (2, "single-node tree equals LSTM step", lstm_reduction()),
        (3, "preprocessing counts", preprocessing_counts()),
        (4, "template classification on LC-QuAD", classification_reproduction(&mut runs)),
        (5, "QALD-7 transfer", qald_transfer(&mut runs)),
        (6, "top-k monotonicity", top_k_monotone(&mut runs)),
        (7, "offline slot filling and querying", offline_pipeline()),
        (8, "metric truths", metric_truths(&runs)),
        (9, "bundle determinism", determinism()),
    ];
    println!();
    for (n, title, o) in &results {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Blocked => "BLOCKED",
        };
        println!("criterion {n} [{tag}] {title}: {}", o.detail);
    }
    let count = |s: Status| results.iter().filter(|(_, _, o)| o.status == s).count();
    println!(
        "acceptance: {} passed, {} failed, {} blocked",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Blocked)
    );
    if count(Status::Fail) > 0 {
        std::process::exit(1);
    }
}
