use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::dataset::{match_template, SlotKind};
use crate::slots::{EntityCandidate, FixtureEntry, FixtureSet, LinkerSource};

const DBR: &str = "http://dbpedia.org/resource/";
const DBO: &str = "http://dbpedia.org/ontology/";

fn r(name: &str) -> String {
    format!("{DBR}{name}")
}

fn o(name: &str) -> String {
    format!("{DBO}{name}")
}

fn catalog() -> TemplateCatalog {
    TemplateCatalog::builtin()
}

fn resource(name: &str) -> EntityCandidate {
    EntityCandidate {
        uri: r(name),
        surface: name.into(),
        source: LinkerSource::Fixture,
        score: 1.0,
        multiword: false,
    }
}

fn cands(resources: &[&str], predicates: &[&str], classes: &[&str]) -> SlotCandidates {
    SlotCandidates {
        resources: resources.iter().map(|n| resource(n)).collect(),
        predicates: predicates.iter().map(|p| o(p)).collect(),
        classes: classes.iter().map(|c| o(c)).collect(),
    }
}

const STORE: &str = r#"
<http://dbpedia.org/resource/Austin_College> <http://dbpedia.org/ontology/mascot> <http://dbpedia.org/resource/Kangaroo> .
<http://dbpedia.org/resource/Geneva> <http://dbpedia.org/ontology/mayor> <http://dbpedia.org/resource/Esther_Alder> .
<http://dbpedia.org/resource/Geneva> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dbpedia.org/ontology/City> .
<http://dbpedia.org/resource/A> <http://dbpedia.org/ontology/team> <http://dbpedia.org/resource/Club> .
<http://dbpedia.org/resource/B> <http://dbpedia.org/ontology/team> <http://dbpedia.org/resource/Club> .
<http://dbpedia.org/resource/C> <http://dbpedia.org/ontology/team> <http://dbpedia.org/resource/Club> .
<http://dbpedia.org/resource/A> <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dbpedia.org/ontology/Person> .
<http://dbpedia.org/resource/Geneva> <http://www.w3.org/2000/01/rdf-schema#label> "Genève"@fr .
"#;

fn store() -> MockStore {
    MockStore::from_ntriples(STORE.as_bytes()).unwrap()
}

#[test]
fn instantiates_single_triple_template() {
    let t = catalog().get(2).unwrap().clone();
    let b = Binding::new(2, [("r", r("Austin_College")), ("p", o("mascot"))]);
    assert_eq!(
        instantiate(&t, &b).unwrap(),
        "SELECT DISTINCT ?uri WHERE { <http://dbpedia.org/resource/Austin_College> <http://dbpedia.org/ontology/mascot> ?uri . }"
    );
}

#[test]
fn absent_optional_class_drops_the_optional_block() {
    let t = catalog().get(1).unwrap().clone();
    let b = Binding::new(1, [("r", r("Club")), ("p", o("team"))]);
    let q = instantiate(&t, &b).unwrap();
    assert!(!q.contains("OPTIONAL"), "{q}");
    assert_eq!(q, "SELECT DISTINCT ?uri WHERE { ?uri <http://dbpedia.org/ontology/team> <http://dbpedia.org/resource/Club> . }");
    let mut with = b.clone();
    with.slots.insert("class".into(), o("Person"));
    let q = instantiate(&t, &with).unwrap();
    assert!(q.contains("OPTIONAL { ?uri <http://www.w3.org/1999/02/22-rdf-syntax-ns#type> <http://dbpedia.org/ontology/Person> }"), "{q}");
}

#[test]
fn instantiates_boolean_template() {
    let t = catalog().get(151).unwrap().clone();
    let b = Binding::new(151, [("r", r("Geneva")), ("p", o("mayor")), ("r2", r("Esther_Alder"))]);
    assert_eq!(
        instantiate(&t, &b).unwrap(),
        format!("ASK WHERE {{ <{}> <{}> <{}> . }}", r("Geneva"), o("mayor"), r("Esther_Alder"))
    );
}

#[test]
fn instantiate_rejects_bad_bindings() {
    let t = catalog().get(151).unwrap().clone();
    let missing = Binding::new(151, [("r", r("Geneva")), ("p", o("mayor"))]);
    assert!(matches!(instantiate(&t, &missing), Err(QueryGenError::MissingSlot { slot, .. }) if slot == "r2"));
    let extra = Binding::new(151, [("r", r("G")), ("p", o("m")), ("r2", r("E")), ("class", o("City"))]);
    assert!(matches!(instantiate(&t, &extra), Err(QueryGenError::UnknownSlot { .. })));
    let bad = Binding::new(151, [("r", "not an iri".to_string()), ("p", o("m")), ("r2", r("E"))]);
    assert!(matches!(instantiate(&t, &bad), Err(QueryGenError::BadIri { .. })));
}

fn iri_for(kind: SlotKind, i: usize) -> String {
    match kind {
        SlotKind::Resource => r(&format!("R{i}")),
        SlotKind::Predicate => o(&format!("p{i}")),
        SlotKind::Class => o(&format!("C{i}")),
    }
}

proptest! {
    #[test]
    fn instantiation_round_trips_through_matching(t_idx in 0usize..15, seed in 0usize..1000, with_class in any::<bool>()) {
        let cat = catalog();
        let t = cat.templates()[t_idx].clone();
        let mut b = Binding::new(t.id, Vec::<(String, String)>::new());
        for (k, s) in t.slots.iter().enumerate() {
            if s.required || with_class {
                b.slots.insert(s.name.clone(), iri_for(s.kind, seed * 7 + k));
            }
        }
        let q = instantiate(&t, &b).unwrap();
        let placeholder = ["<r>", "<p>", "<r2>", "<p2>", "<class>"];
        prop_assert!(placeholder.iter().all(|p| !q.contains(p)), "{}", q);
        prop_assert_eq!(match_template(&q, &cat), Some(t.id), "{}", q);
    }

    #[test]
    fn enumeration_count_matches_product(
        t_idx in 0usize..15,
        nr in 1usize..4,
        np in 1usize..4,
        nc in 0usize..3,
    ) {
        let cat = catalog();
        let t = cat.templates()[t_idx].clone();
        let c = SlotCandidates {
            resources: (0..nr).map(|i| resource(&format!("R{i}"))).collect(),
            predicates: (0..np).map(|i| o(&format!("p{i}"))).collect(),
            classes: (0..nc).map(|i| o(&format!("C{i}"))).collect(),
        };
        let mut expected = 1usize;
        for s in &t.slots {
            let n = match s.kind {
                SlotKind::Resource => nr,
                SlotKind::Predicate => np,
                SlotKind::Class => nc,
            };
            expected *= if s.kind == SlotKind::Class && !s.required { 1 + n } else { n };
        }
        match enumerate_bindings(&t, &c) {
            Ok(stream) => {
                prop_assert_eq!(stream.total(), expected);
                let all: Vec<Binding> = stream.collect();
                prop_assert_eq!(all.len(), expected);
                let distinct: std::collections::BTreeSet<_> = all.iter().map(|b| b.slots.clone()).collect();
                prop_assert_eq!(distinct.len(), expected);
            }
            Err(QueryGenError::EmptySlot { .. }) => prop_assert_eq!(expected, 0),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}

#[test]
fn enumeration_is_lexicographic() {
    let t = catalog().get(2).unwrap().clone();
    let got: Vec<(String, String)> = enumerate_bindings(&t, &cands(&["A", "B"], &["x", "y", "z"], &[]))
        .unwrap()
        .map(|b| (b.slots["r"].clone(), b.slots["p"].clone()))
        .collect();
    let mut want = Vec::new();
    for res in ["A", "B"] {
        for p in ["x", "y", "z"] {
            want.push((r(res), o(p)));
        }
    }
    assert_eq!(got, want);
}

#[test]
fn class_free_binding_comes_first() {
    let t = catalog().get(1).unwrap().clone();
    let got: Vec<Option<String>> = enumerate_bindings(&t, &cands(&["A"], &["x"], &["C1", "C2"]))
        .unwrap()
        .map(|b| b.slots.get("class").cloned())
        .collect();
    assert_eq!(got, vec![None, Some(o("C1")), Some(o("C2"))]);
}

#[test]
fn single_candidates_give_one_binding() {
    let t = catalog().get(2).unwrap().clone();
    let all: Vec<Binding> = enumerate_bindings(&t, &cands(&["A"], &["x"], &[])).unwrap().collect();
    assert_eq!(all, vec![Binding::new(2, [("p", o("x")), ("r", r("A"))])]);
}

#[test]
fn empty_required_slot_is_named() {
    let t = catalog().get(2).unwrap().clone();
    let err = enumerate_bindings(&t, &cands(&[], &["x"], &[])).unwrap_err();
    assert!(err.to_string().starts_with("EMPTY_SLOT"));
    assert!(matches!(err, QueryGenError::EmptySlot { slot, .. } if slot == "r"));
    let required_class = catalog().get(11).unwrap().clone();
    assert!(matches!(
        enumerate_bindings(&required_class, &cands(&["A"], &["x"], &[])),
        Err(QueryGenError::EmptySlot { slot, .. }) if slot == "class"
    ));
}

#[test]
fn mock_store_answers_template_shapes() {
    let s = store();
    assert_eq!(s.len(), 8);
    let ask = format!("ASK WHERE {{ <{}> <{}> <{}> . }}", r("Geneva"), o("mayor"), r("Esther_Alder"));
    assert_eq!(execute(&ask, &s).unwrap(), AnswerSet::Boolean { flag: true });
    let none = format!("SELECT DISTINCT ?uri WHERE {{ <{}> <{}> ?uri . }}", r("Geneva"), o("mascot"));
    assert_eq!(execute(&none, &s).unwrap(), AnswerSet::empty());
    let count = format!("SELECT (COUNT(DISTINCT ?uri) as ?count) WHERE {{ ?uri <{}> <{}> . }}", o("team"), r("Club"));
    assert_eq!(execute(&count, &s).unwrap(), AnswerSet::Count { count: 3 });
    let typed = format!(
        "SELECT DISTINCT ?uri WHERE {{ ?uri <{}> <{}> . OPTIONAL {{ ?uri rdf:type <{}> }} }}",
        o("team"),
        r("Club"),
        o("Person")
    );
    assert_eq!(execute(&typed, &s).unwrap(), AnswerSet::uris([r("A"), r("B"), r("C")]));
    let required = format!("SELECT DISTINCT ?uri WHERE {{ ?uri <{}> <{}> . ?uri rdf:type <{}> }}", o("team"), r("Club"), o("Person"));
    assert_eq!(execute(&required, &s).unwrap(), AnswerSet::uris([r("A")]));
    assert!(matches!(
        s.query("SELECT ?x WHERE { ?x ?p ?o FILTER(?o = 1) }"),
        Err(EndpointError::Unsupported(_))
    ));
}

#[test]
fn malformed_ntriples_is_rejected() {
    assert!(MockStore::from_ntriples("<a> <b> .".as_bytes()).is_err());
}

#[test]
fn first_viable_returns_third_binding() {
    let t = catalog().get(2).unwrap().clone();
    let c = cands(&["Geneva", "Austin_College"], &["mayor", "mascot"], &[]);
    // (Geneva, mayor) is viable but mascot comes first for Geneva here
    let c = SlotCandidates {
        resources: vec![resource("Geneva"), resource("Austin_College")],
        predicates: vec![o("mascot"), o("nickname")],
        ..c
    };
    let rec = RecordingEndpoint::new(store());
    let s = first_viable(&t, &c, &rec, 64).unwrap();
    let found = s.found.unwrap();
    assert_eq!(found.binding, Binding::new(2, [("r", r("Austin_College")), ("p", o("mascot"))]));
    assert_eq!(found.answer, AnswerSet::uris([r("Kangaroo")]));
    assert_eq!(s.queries, 3);
    let issued = rec.queries();
    let expected: Vec<String> = enumerate_bindings(&t, &c)
        .unwrap()
        .take(3)
        .map(|b| instantiate(&t, &b).unwrap())
        .collect();
    assert_eq!(issued, expected);
}

#[test]
fn first_viable_none_when_everything_is_empty() {
    let t = catalog().get(2).unwrap().clone();
    let rec = RecordingEndpoint::new(store());
    let s = first_viable(&t, &cands(&["Nowhere", "Nobody"], &["x", "y"], &[]), &rec, 64).unwrap();
    assert!(s.found.is_none());
    assert_eq!(s.queries, 4);
    assert_eq!(rec.queries().len(), 4);
}

#[test]
fn budget_caps_queries() {
    let t = catalog().get(2).unwrap().clone();
    let rec = RecordingEndpoint::new(store());
    let s = first_viable(&t, &cands(&["Austin_College"], &["mascot"], &[]), &rec, 1).unwrap();
    assert!(s.found.is_some());
    assert_eq!(rec.queries().len(), 1);

    rec.clear();
    let s = first_viable(&t, &cands(&["A", "B", "C"], &["x", "y"], &[]), &rec, 4).unwrap();
    assert!(s.found.is_none());
    assert_eq!(rec.queries().len(), 4);
}

#[test]
fn boolean_viability_uses_an_existence_check() {
    let t = catalog().get(151).unwrap().clone();
    let rec = RecordingEndpoint::new(store());
    let c = SlotCandidates {
        resources: vec![resource("Geneva"), resource("Esther_Alder")],
        predicates: vec![o("mayor")],
        classes: vec![],
    };
    let s = first_viable(&t, &c, &rec, 64).unwrap();
    let found = s.found.unwrap();
    assert_eq!(found.answer, AnswerSet::Boolean { flag: true });
    assert_eq!(found.binding.get("r2"), Some(r("Esther_Alder").as_str()));
    let q = rec.queries();
    assert_eq!(q.len(), 3, "{q:#?}");
    assert!(q[2].starts_with("SELECT *") && q[2].ends_with("LIMIT 1"));
}

#[test]
fn mock_server_speaks_the_protocol() {
    let server = MockServer::start(store(), "127.0.0.1:0").unwrap();
    let ep = HttpEndpoint::new(server.url());
    let ask = format!("ASK WHERE {{ <{}> <{}> <{}> . }}", r("Geneva"), o("mayor"), r("Esther_Alder"));
    assert_eq!(execute(&ask, &ep).unwrap(), AnswerSet::Boolean { flag: true });
    let count = format!("SELECT (COUNT(DISTINCT ?uri) as ?count) WHERE {{ ?uri <{}> <{}> . }}", o("team"), r("Club"));
    assert_eq!(execute(&count, &ep).unwrap(), AnswerSet::Count { count: 3 });
    let resp = ureq::post(&server.url())
        .set("Content-Type", "application/x-www-form-urlencoded")
        .send_string(&format!("query={}", form_urlencoded::byte_serialize(ask.as_bytes()).collect::<String>()))
        .unwrap()
        .into_string()
        .unwrap();
    assert!(resp.contains("\"boolean\":true"));
    assert!(matches!(ep.query("SELECT nonsense"), Err(EndpointError::Rejected { status: 400, .. })));
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let ep = HttpEndpoint::with_policy(
        format!("http://127.0.0.1:{port}/sparql"),
        Duration::from_millis(500),
        2,
        Duration::from_millis(1),
    );
    match ep.query("ASK WHERE { ?s ?p ?o }") {
        Err(EndpointError::Unreachable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

fn hyp(template: u32, rank: usize) -> TemplateHypothesis {
    TemplateHypothesis {
        template,
        prob: 1.0 / rank as f64,
        rank,
    }
}

fn fixtures(text: &str, names: &[&str]) -> Vec<Box<dyn crate::slots::EntityLinker>> {
    let mut set = FixtureSet::default();
    set.insert(FixtureEntry {
        text: text.into(),
        candidates: names
            .iter()
            .map(|n| EntityCandidate {
                uri: r(n),
                surface: n.replace('_', " "),
                source: LinkerSource::Fixture,
                score: 1.0,
                multiword: false,
            })
            .collect(),
        ..Default::default()
    });
    set.linkers()
}

#[test]
fn second_hypothesis_answers_when_first_fails() {
    let cat = catalog();
    let text = "Who is the mayor of Geneva ?";
    let linkers = fixtures(text, &["Geneva"]);
    let lexicon = Lexicon::from_json(&format!(r#"{{"mayor": ["{}"]}}"#, o("mayor"))).unwrap();
    let s = store();
    let p = QaPipeline {
        bundle: None,
        catalog: &cat,
        linkers: &linkers,
        lexicon: &lexicon,
        endpoint: &s,
        config: QaConfig::default(),
    };
    let out = p.answer_with(Some("q1".into()), text, vec![hyp(1, 1), hyp(2, 2), hyp(5, 3)]).unwrap();
    assert_eq!(out.template, Some(2));
    assert_eq!(out.answers, Some(AnswerSet::uris([r("Esther_Alder")])));
    assert_eq!(out.reason, None);
    let json = out.to_json();
    assert_eq!(json["template"], 2);
    assert_eq!(json["binding"]["r"], r("Geneva"));
    assert_eq!(json["answers"]["kind"], "URIS");
}

#[test]
fn boolean_question_answers_true() {
    let cat = catalog();
    let text = "Is Esther Alder the mayor of Geneva?";
    let linkers = fixtures(text, &["Esther_Alder", "Geneva"]);
    let lexicon = Lexicon::from_json(&format!(r#"{{"mayor": ["{}"]}}"#, o("mayor"))).unwrap();
    let s = store();
    let p = QaPipeline {
        bundle: None,
        catalog: &cat,
        linkers: &linkers,
        lexicon: &lexicon,
        endpoint: &s,
        config: QaConfig::default(),
    };
    let out = p.answer_with(None, text, vec![hyp(151, 1)]).unwrap();
    assert_eq!(out.answers, Some(AnswerSet::Boolean { flag: true }));
    assert_eq!(out.template, Some(151));

    let false_text = "Is Geneva the mayor of Austin College?";
    let linkers = fixtures(false_text, &["Geneva", "Austin_College"]);
    let p = QaPipeline { linkers: &linkers, ..p };
    let out = p.answer_with(None, false_text, vec![hyp(151, 1)]).unwrap();
    assert_eq!(out.answers, Some(AnswerSet::Boolean { flag: false }));
    assert_eq!(out.binding.unwrap().get("r"), Some(r("Geneva").as_str()));
}

#[test]
fn no_entities_means_empty_slot() {
    let cat = catalog();
    let text = "Who is the mayor?";
    let linkers = fixtures(text, &[]);
    let lexicon = Lexicon::from_json(&format!(r#"{{"mayor": ["{}"]}}"#, o("mayor"))).unwrap();
    let s = store();
    let p = QaPipeline {
        bundle: None,
        catalog: &cat,
        linkers: &linkers,
        lexicon: &lexicon,
        endpoint: &s,
        config: QaConfig::default(),
    };
    let out = p.answer_with(None, text, vec![hyp(2, 1), hyp(1, 2)]).unwrap();
    assert_eq!(out.answers, None);
    assert_eq!(out.reason, Some(Unanswered::EmptySlot));
    assert_eq!(out.to_json()["reason"], "EMPTY_SLOT");
    assert_eq!(out.queries, 0);
}

#[test]
fn classifying_without_a_model_fails() {
    let cat = catalog();
    let text = "Who is the mayor?";
    let linkers = fixtures(text, &[]);
    let lexicon = Lexicon::default();
    let s = store();
    let p = QaPipeline {
        bundle: None,
        catalog: &cat,
        linkers: &linkers,
        lexicon: &lexicon,
        endpoint: &s,
        config: QaConfig::default(),
    };
    let tree = crate::nlp::build_tree(vec![crate::nlp::Token::new(1, "mayor", "NN", "root", 0)]).unwrap();
    let q = ParsedQuestion {
        qid: None,
        text: text.into(),
        tree,
    };
    assert!(matches!(p.answer(&q), Err(QueryGenError::NoModel)));
}
