mod common;

use std::collections::{BTreeSet, HashSet};

use serde_json::{json, Value};
use webgym_core::actions::{build_catalog, ActionSet};
use webgym_core::chat::{Chat, ChatRole};
use webgym_core::driver::Session;
use webgym_core::env::{Env, EnvConfig, Task};
use webgym_core::harness::MAX_STEPS;
use webgym_core::tasks::{
    self, fetch_store, normalize, registry, AcceptedAnswers, ChartAnswer, Expected, FixtureServer, InstantiateError,
    Manifest, TaskInstance,
};

const HQ_CANONICAL: &str = "42, Pizza street, New York, USA";
const HQ_ALTERNATES: [&str; 4] = [
    "42 Pizza Street, New York, USA",
    "42, Pizza St., NY, United States",
    "#42 Pizza Street, New York, U.S.",
    "42 Pizza St, New York City, United States of America",
];

#[test]
fn registry_shape() {
    let defs = registry();
    let names: Vec<&str> = defs.iter().map(|d| d.name).collect();
    let unique: HashSet<&str> = names.iter().copied().collect();
    assert_eq!(unique.len(), names.len(), "duplicate task names: {names:?}");
    assert_eq!(names.iter().filter(|n| **n == "create-user-form").count(), 1);
    for d in &defs {
        assert!(d.instance_cap >= 10, "{} caps at {}", d.name, d.instance_cap);
    }
    let families: BTreeSet<&str> = defs.iter().map(|d| d.category.family()).collect();
    let want: BTreeSet<&str> = ["forms", "lists", "menus", "service catalogs", "knowledge bases", "dashboards"].into();
    assert_eq!(families, want);
}

#[test]
fn instantiation_is_deterministic_and_bounded() {
    for d in registry() {
        let a = d.instantiate(0).unwrap();
        let b = d.instantiate(0).unwrap();
        assert_eq!((a.params, a.goal, a.expected), (b.params, b.goal, b.expected), "{}", d.name);
        assert_eq!(
            d.instantiate(d.instance_cap).unwrap_err(),
            InstantiateError::SeedOutOfRange {
                task: d.name.to_string(),
                seed: d.instance_cap,
                cap: d.instance_cap
            }
        );
    }
    assert_eq!(
        tasks::instantiate("no-such-task", 0).unwrap_err(),
        InstantiateError::UnknownTask("no-such-task".into())
    );
}

#[test]
fn every_seed_has_distinct_parameters_named_in_the_goal() {
    for d in registry() {
        let mut seen = HashSet::new();
        for seed in 0..d.instance_cap {
            let t = d.instantiate(seed).unwrap();
            assert!(seen.insert(t.params.clone()), "{} seed {seed} repeats parameters", d.name);
            for (k, v) in &t.params {
                assert!(t.goal.contains(v.as_str()), "{} seed {seed}: goal lacks {k}={v:?}", d.name);
            }
            assert!(!t.goal.contains('{'), "{} seed {seed}: unfilled placeholder in {:?}", d.name, t.goal);
        }
    }
}

#[test]
fn oracle_lengths_fit_the_step_cap_and_match_the_manifest() {
    let manifest = Manifest::build();
    assert_eq!(manifest.digest(), Manifest::build().digest());
    assert_eq!(manifest.tasks.len(), registry().len());
    for entry in &manifest.tasks {
        let def = tasks::definition(&entry.name).unwrap();
        assert_eq!(entry.oracle_lengths.len() as u64, def.instance_cap);
        for (seed, len) in entry.oracle_lengths.iter().enumerate() {
            let steps = def.instantiate(seed as u64).unwrap().oracle_steps();
            assert_eq!(steps.len(), *len, "{} seed {seed}", entry.name);
            assert!(*len >= 1 && *len <= MAX_STEPS as usize, "{} seed {seed}: {len} steps", entry.name);
        }
    }
}

#[tokio::test]
async fn fixture_server_routes() {
    let server = FixtureServer::start().await.unwrap();
    let base = server.base_url();
    let http = reqwest::Client::new();

    let page = http.get(format!("{base}/form/0")).send().await.unwrap();
    assert_eq!(page.status(), 200);
    assert!(page.text().await.unwrap().contains("Submit"));

    let resp = http
        .post(format!("{base}/form/route-check"))
        .form(&[("first_name", "Ada"), ("last_name", " Lovelace ")])
        .send()
        .await
        .unwrap();
    assert!(resp.status().is_success());
    let events = fetch_store(&base, "route-check").await.unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["kind"], "form_submit");
    assert_eq!(events[0]["fields"]["last_name"], "Lovelace");

    let body: Value = http.get(format!("{base}/store/empty")).send().await.unwrap().json().await.unwrap();
    assert_eq!(body, json!({ "id": "empty", "events": [] }));

    let missing = http.get(format!("{base}/no/such/page")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
}

fn hq_instance() -> TaskInstance {
    let def = registry().into_iter().find(|d| d.category == tasks::Category::KnowledgeQa).unwrap();
    (0..def.instance_cap)
        .map(|s| def.instantiate(s).unwrap())
        .find(|t| matches!(&t.expected, Expected::Answer { accepted } if accepted.canonical == HQ_CANONICAL))
        .expect("some seed asks for the headquarters address")
}

#[test]
fn address_alternates_are_accepted() {
    let task = hq_instance();
    for answer in [HQ_CANONICAL].iter().chain(&HQ_ALTERNATES) {
        assert!(task.expected.check_message(answer), "{answer:?} rejected");
    }
    for wrong in ["43, Pizza street, New York, USA", "42, Pasta street, New York, USA", "", "New York"] {
        assert!(!task.expected.check_message(wrong), "{wrong:?} accepted");
    }
}

#[test]
fn normalization_is_symmetric() {
    let a = AcceptedAnswers::new("Hello, World!", &[]);
    assert!(a.accepts("hello world"));
    let b = AcceptedAnswers::new("hello world", &[]);
    assert!(b.accepts("Hello,   World!"));
    for s in [HQ_CANONICAL, "U.S.", "  mixed\tCASE  "] {
        assert_eq!(normalize(&normalize(s)), normalize(s));
    }
}

#[test]
fn dashboard_numbers_allow_half_a_percent() {
    let n = ChartAnswer::Number { value: 1000.0 };
    for ok in ["1000", "The value is 1,005.", "995", "about 1004.9 units"] {
        assert!(n.accepts(ok), "{ok:?}");
    }
    for bad in ["1006", "994", "no number", "10000"] {
        assert!(!n.accepts(bad), "{bad:?}");
    }
}

#[test]
fn dashboard_labels_match_whole_words() {
    let l = ChartAnswer::Label { label: "North".into() };
    assert!(l.accepts("North"));
    assert!(l.accepts("It is north."));
    assert!(!l.accepts("Northeast"));
    assert!(!l.accepts("South"));
    let two = ChartAnswer::Label { label: "Service Desk".into() };
    assert!(two.accepts("the service desk has the most"));
    assert!(!two.accepts("service"));
}

fn form_event(fields: &[(&str, &str)]) -> Value {
    let fields: serde_json::Map<String, Value> = fields.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    json!({ "kind": "form_submit", "fields": fields })
}

#[test]
fn form_validator_reads_the_latest_submission() {
    let expected = Expected::Fields {
        fields: [("name".to_string(), "Alice".to_string())].into(),
    };
    assert!(expected.check_events(&[form_event(&[("name", "Alice")])]));
    assert!(!expected.check_events(&[form_event(&[("name", "Bob")])]));
    assert!(!expected.check_events(&[form_event(&[("name", "Alice")]), form_event(&[("name", "Bob")])]));
    assert!(expected.check_events(&[form_event(&[("name", "Bob")]), form_event(&[("name", "Alice")])]));
    assert!(!expected.check_events(&[]));
}

#[test]
fn sort_validator_compares_keys_in_order() {
    let expected = Expected::Sort {
        keys: vec![("priority".into(), "ascending".into()), ("state".into(), "descending".into())],
    };
    let state = |sort: Value| json!({ "kind": "list_state", "filters": {}, "sort": sort, "rows": [] });
    let good = state(json!([
        { "field": "priority", "direction": "ascending" },
        { "field": "state", "direction": "descending" }
    ]));
    let swapped = state(json!([
        { "field": "state", "direction": "descending" },
        { "field": "priority", "direction": "ascending" }
    ]));
    assert!(expected.check_events(&[good]));
    assert!(!expected.check_events(&[swapped]));
}

#[test]
fn only_the_latest_agent_message_counts() {
    let task = hq_instance();
    let chat = Chat::new();
    chat.push(ChatRole::User, task.goal.clone(), 0);
    chat.push(ChatRole::Agent, HQ_CANONICAL, 1);
    chat.push(ChatRole::Agent, "Actually I am not sure.", 2);
    assert!(!task.expected.check_message(&chat.last_agent_message().unwrap()));
    chat.push(ChatRole::Agent, HQ_ALTERNATES[2], 3);
    assert!(task.expected.check_message(&chat.last_agent_message().unwrap()));
}

/// Copies of `expected` with exactly one value leaf changed.
fn single_perturbations(expected: &Expected) -> Vec<Expected> {
    fn leaves(v: &Value, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
        match v {
            Value::Object(m) => {
                for (k, c) in m {
                    if k == "kind" {
                        continue;
                    }
                    path.push(k.clone());
                    leaves(c, path, out);
                    path.pop();
                }
            }
            Value::Array(a) => {
                for (i, c) in a.iter().enumerate() {
                    path.push(i.to_string());
                    leaves(c, path, out);
                    path.pop();
                }
            }
            _ => out.push(path.clone()),
        }
    }
    let value = serde_json::to_value(expected).unwrap();
    let mut paths = Vec::new();
    leaves(&value, &mut Vec::new(), &mut paths);
    paths
        .into_iter()
        .map(|path| {
            let mut v = value.clone();
            let pointer = format!("/{}", path.join("/"));
            let leaf = v.pointer_mut(&pointer).unwrap();
            *leaf = match leaf {
                Value::String(s) => json!(format!("{s} (changed)")),
                Value::Number(n) => match n.as_u64() {
                    Some(i) => json!(i + 1),
                    None => json!(n.as_f64().unwrap() * 1.5 + 1.0),
                },
                other => panic!("unexpected leaf {other}"),
            };
            serde_json::from_value(v).unwrap_or_else(|e| panic!("{pointer}: {e}"))
        })
        .collect()
}

/// A copy of a chat expectation whose every accepted answer is wrong.
fn wrong_answer(expected: &Expected) -> Expected {
    match expected {
        Expected::Answer { accepted } => {
            let alts: Vec<String> = accepted.alternates.iter().map(|a| format!("not {a}")).collect();
            let alts: Vec<&str> = alts.iter().map(String::as_str).collect();
            Expected::Answer {
                accepted: AcceptedAnswers::new(&format!("not {}", accepted.canonical), &alts),
            }
        }
        Expected::Chart { answer: ChartAnswer::Number { value } } => Expected::Chart {
            answer: ChartAnswer::Number { value: value * 1.5 + 1.0 },
        },
        Expected::Chart { answer: ChartAnswer::Label { label } } => Expected::Chart {
            answer: ChartAnswer::Label {
                label: format!("{label} changed"),
            },
        },
        other => panic!("not a chat expectation: {other:?}"),
    }
}

/// The instance id sits right after the page family in every task URL.
fn instance_id_of(url: &str) -> String {
    let path = url.split("://").nth(1).and_then(|r| r.split_once('/')).map(|(_, p)| p).unwrap();
    path.split(['/', '?']).nth(1).unwrap().to_string()
}

#[tokio::test]
async fn oracles_solve_every_task_and_perturbed_expectations_fail() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let base = server.base_url();
    let _slot = common::slot().await;
    let session = Session::launch(Default::default()).await.unwrap();
    let mut env = Env::new(session, build_catalog(ActionSet::Bid, true), EnvConfig::default());

    for def in registry() {
        for seed in 0..2 {
            let task = def.instantiate(seed).unwrap().with_base_url(&base);
            let expected = task.expected.clone();
            let canonical_steps = task.oracle().len();
            assert!(canonical_steps > 0);
            env.reset(Box::new(task)).await.unwrap();
            env.cheat().await.unwrap_or_else(|e| panic!("{} seed {seed}: {e}", def.name));
            let v = env.validate().await.unwrap();
            assert!(v.done && v.reward == 1.0, "{} seed {seed}: {v:?}", def.name);

            if expected.uses_chat() {
                let said = env.chat().last_agent_message().unwrap();
                assert!(expected.check_message(&said));
                assert!(!wrong_answer(&expected).check_message(&said), "{} seed {seed}", def.name);
                if let Expected::Answer { accepted } = &expected {
                    assert_eq!(said, accepted.canonical);
                }
            } else {
                let obs = env.observe().await.unwrap();
                let id = instance_id_of(&obs.open_pages[obs.active_page]);
                let events = fetch_store(&base, &id).await.unwrap();
                assert!(expected.check_events(&events), "{} seed {seed}: {events:?}", def.name);
                let mutants = single_perturbations(&expected);
                assert!(!mutants.is_empty());
                for m in mutants {
                    assert!(!m.check_events(&events), "{} seed {seed}: {m:?} still passes", def.name);
                }
            }
        }
    }
}

#[tokio::test]
async fn address_alternates_pass_through_the_environment() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let _slot = common::slot().await;
    let session = Session::launch(Default::default()).await.unwrap();
    let mut env = Env::new(session, build_catalog(ActionSet::Bid, false), EnvConfig::default());
    for answer in HQ_ALTERNATES {
        env.reset(Box::new(hq_instance().with_base_url(server.base_url()))).await.unwrap();
        let out = env.step(&format!("send_msg_to_user({})", json!(answer))).await.unwrap();
        assert_eq!((out.reward, out.done), (1.0, true), "{answer:?}");
    }
    env.reset(Box::new(hq_instance().with_base_url(server.base_url()))).await.unwrap();
    let out = env.step("send_msg_to_user(\"43, Pizza street, New York, USA\")").await.unwrap();
    assert_eq!((out.reward, out.done), (0.0, false));
}
