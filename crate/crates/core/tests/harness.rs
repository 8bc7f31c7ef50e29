mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use webgym_core::agent::{Agent, AgentConfig, ModelClient, OracleClient, ScriptedClient};
use webgym_core::driver::Session;
use webgym_core::env::Env;
use webgym_core::harness::{
    report, run_episode, run_suite, sample_config, search, stratified_bootstrap, ClientFactory, ConfigEvaluator,
    EpisodeRecord, HarnessError, ReportFormat, ResultSet, RunOptions, SearchError, SearchSpace, Suite, MAX_STEPS,
};
use webgym_core::tasks::{self, registry, Expected, FixtureServer, Manifest, TaskInstance};

fn bernoulli(n: usize, successes: usize) -> Vec<f64> {
    (0..n).map(|i| if i < successes { 1.0 } else { 0.0 }).collect()
}

#[test]
fn bootstrap_standard_error_matches_the_analytic_value() {
    // Seven strata of ten outcomes with assorted success counts.
    let counts = [5, 3, 7, 5, 2, 8, 5];
    let strata: Vec<Vec<f64>> = counts.iter().map(|&k| bernoulli(10, k)).collect();

    // Resampling a stratum of n outcomes with rate p gives a mean with
    // variance p(1-p)/n; the macro-average of K strata divides by K^2.
    let k = strata.len() as f64;
    let var: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / 10.0;
            p * (1.0 - p) / 10.0
        })
        .sum::<f64>()
        / (k * k);
    let analytic = var.sqrt();

    let draws = 100;
    let mean_se: f64 = (0..draws)
        .map(|seed| stratified_bootstrap(&strata, 1000, seed).unwrap().std_err)
        .sum::<f64>()
        / draws as f64;
    assert!(
        (mean_se - analytic).abs() <= 0.2 * analytic,
        "bootstrap SE {mean_se} vs analytic {analytic}"
    );

    let stats = stratified_bootstrap(&strata, 1000, 0).unwrap();
    let empirical = counts.iter().map(|&c| c as f64 / 10.0).sum::<f64>() / k;
    assert!((stats.empirical_mean - empirical).abs() < 1e-12);
    assert!((stats.success_rate - empirical).abs() < 0.02);
}

#[test]
fn bootstrap_error_on_fair_coin_outcomes() {
    use rand::Rng;
    // Ten tasks of ten fair-coin outcomes: sqrt(10 * 0.25 / 10) / 10 = 0.05.
    let analytic = (10.0 * 0.25 / 10.0f64).sqrt() / 10.0;
    let draws = 100;
    let mut total = 0.0;
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + draw);
        let strata: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..10).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .collect();
        total += stratified_bootstrap(&strata, 1000, draw).unwrap().std_err;
    }
    let mean_se = total / draws as f64;
    assert!((mean_se - analytic).abs() <= 0.2 * analytic, "{mean_se} vs {analytic}");
}

#[test]
fn bootstrap_of_identical_outcomes_has_zero_error() {
    for value in [0.0, 1.0] {
        let strata = vec![vec![value; 10]; 7];
        let s = stratified_bootstrap(&strata, 1000, 3).unwrap();
        assert_eq!((s.success_rate, s.std_err, s.empirical_mean), (value, 0.0, value));
    }
}

#[test]
fn bootstrap_weights_tasks_equally() {
    let s = stratified_bootstrap(&[vec![1.0; 10], vec![0.0; 2]], 200, 0).unwrap();
    assert_eq!(s.empirical_mean, 0.5);
    assert_eq!(s.success_rate, 0.5);
    assert_eq!(s.n_records, 12);
}

fn record(task: &str, seed: u64, success: bool, steps: u32) -> EpisodeRecord {
    EpisodeRecord {
        task: task.to_string(),
        seed,
        steps,
        reward: if success { 1.0 } else { 0.0 },
        success,
        wall_time_s: 0.0,
        trace: None,
        aborted: false,
        error: None,
    }
}

fn results(config: &AgentConfig, outcomes: &[(&str, &[bool])]) -> ResultSet {
    let mut set = ResultSet::new(config.digest(), Manifest::build().digest());
    for (task, seeds) in outcomes {
        for (seed, ok) in seeds.iter().enumerate() {
            set.insert(record(task, seed as u64, *ok, if *ok { 4 } else { MAX_STEPS }));
        }
    }
    set
}

#[test]
fn reports_are_byte_stable_and_carry_deltas() {
    let config = AgentConfig::default();
    let run = results(
        &config,
        &[("create-user-form", &[true, true, false, true]), ("navigate-menu", &[true, false, false, false])],
    );
    let base = results(
        &AgentConfig::preset("llama3").unwrap(),
        &[("create-user-form", &[false, false, false, true]), ("navigate-menu", &[true, false, false, false])],
    );

    let md = report(&run, None, ReportFormat::Markdown, 500, 7).unwrap();
    assert_eq!(md, report(&run, None, ReportFormat::Markdown, 500, 7).unwrap());
    let body: Vec<&str> = md.lines().skip(2).collect();
    assert_eq!(body.len(), 3, "{md}");
    assert!(body[2].starts_with("| total |"));
    assert!(!md.contains("Delta"));

    let with_delta = report(&run, Some(&base), ReportFormat::Markdown, 500, 7).unwrap();
    assert!(with_delta.lines().next().unwrap().contains("Delta"));

    let doc: Value = serde_json::from_str(&report(&run, Some(&base), ReportFormat::Json, 500, 7).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let form = rows.iter().find(|r| r["category"] == "form").unwrap();
    let run_sr = stratified_bootstrap(&[vec![1.0, 1.0, 0.0, 1.0]], 500, 7).unwrap().success_rate;
    let base_sr = stratified_bootstrap(&[vec![0.0, 0.0, 0.0, 1.0]], 500, 7).unwrap().success_rate;
    assert!((form["delta"].as_f64().unwrap() - (run_sr - base_sr)).abs() < 1e-12);
    let menu = rows.iter().find(|r| r["category"] == "menu").unwrap();
    assert_eq!(menu["delta"].as_f64().unwrap(), 0.0);
}

#[test]
fn sampled_configurations_are_always_valid() {
    let space = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sets = std::collections::BTreeSet::new();
    for _ in 0..500 {
        let c = sample_config(&space, &AgentConfig::default(), &mut rng).unwrap();
        assert_eq!(c.validate(), Ok(()), "{c:?}");
        sets.insert(c.action_set.to_string());
    }
    assert_eq!(sets.len(), 2, "both action sets are reachable");
}

/// Succeeds on every episode only for one planted flag combination.
struct Planted;

#[async_trait]
impl ConfigEvaluator for Planted {
    async fn evaluate(&self, config: &AgentConfig) -> Result<ResultSet, HarnessError> {
        let best = config.use_error_history && !config.multi_actions;
        let partial = config.use_error_history;
        let seeds: &[bool] = if best {
            &[true, true, true]
        } else if partial {
            &[true, false, false]
        } else {
            &[false, false, false]
        };
        Ok(results(config, &[("create-user-form", seeds), ("navigate-menu", seeds)]))
    }
}

fn two_flag_space() -> SearchSpace {
    let mut space = BTreeMap::new();
    space.insert("use_error_history".to_string(), vec![json!(false), json!(true)]);
    space.insert("multi_actions".to_string(), vec![json!(false), json!(true)]);
    SearchSpace(space)
}

#[tokio::test]
async fn search_finds_the_planted_optimum() {
    let board = search(&two_flag_space(), &AgentConfig::default(), 24, &Planted, 5, 200).await.unwrap();
    assert_eq!(board.len(), 24);
    let top = &board[0];
    assert!(top.config.use_error_history && !top.config.multi_actions);
    assert_eq!((top.stats.success_rate, top.stats.std_err), (1.0, 0.0));
    for pair in board.windows(2) {
        assert!(pair[0].stats.success_rate >= pair[1].stats.success_rate);
    }

    let one = search(&two_flag_space(), &AgentConfig::default(), 1, &Planted, 5, 200).await.unwrap();
    assert_eq!(one.len(), 1);
    assert!(matches!(
        search(&two_flag_space(), &AgentConfig::default(), 0, &Planted, 5, 200).await,
        Err(SearchError::NoBudget)
    ));
    let again = search(&two_flag_space(), &AgentConfig::default(), 24, &Planted, 5, 200).await.unwrap();
    assert_eq!(again, board);
}

fn hq_instance(base: &str) -> TaskInstance {
    let def = registry().into_iter().find(|d| d.category == tasks::Category::KnowledgeQa).unwrap();
    (0..def.instance_cap)
        .map(|s| def.instantiate(s).unwrap())
        .find(|t| matches!(&t.expected, Expected::Answer { accepted } if accepted.canonical.contains("Pizza")))
        .unwrap()
        .with_base_url(base)
}

async fn env(config: &AgentConfig) -> Env {
    let session = Session::launch(Default::default()).await.unwrap();
    Env::new(session, config.catalog(), config.env_config())
}

#[tokio::test]
async fn episode_lengths() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let base = server.base_url();
    let config = AgentConfig::default();
    let _slot = common::slot().await;
    let mut env = env(&config).await;

    let task = tasks::instantiate("create-user-form", 0).unwrap().with_base_url(&base);
    let oracle_len = task.oracle_steps().len() as u32;
    let mut agent = Agent::new(config.clone(), Arc::new(OracleClient::new(task.oracle_steps()))).unwrap();
    let r = run_episode(&mut agent, &mut env, Box::new(task), MAX_STEPS).await;
    assert!(r.success, "{r:?}");
    assert!(r.steps <= oracle_len, "{} > {oracle_len}", r.steps);

    let task = tasks::instantiate("create-user-form", 0).unwrap().with_base_url(&base);
    let mut agent = Agent::new(config.clone(), Arc::new(ScriptedClient::constant("noop()"))).unwrap();
    let r = run_episode(&mut agent, &mut env, Box::new(task), MAX_STEPS).await;
    assert_eq!((r.steps, r.success, r.reward), (MAX_STEPS, false, 0.0));

    let task = hq_instance(&base);
    let answer = match &task.expected {
        Expected::Answer { accepted } => accepted.canonical.clone(),
        _ => unreachable!(),
    };
    let script = ["noop()".to_string(), "noop()".to_string(), format!("send_msg_to_user({})", json!(answer))];
    let mut agent = Agent::new(config, Arc::new(ScriptedClient::new(script, "noop()"))).unwrap();
    let r = run_episode(&mut agent, &mut env, Box::new(task), MAX_STEPS).await;
    assert_eq!((r.steps, r.success), (3, true));
}

fn constant_clients(reply: &'static str) -> ClientFactory {
    Arc::new(move |_: &TaskInstance| Arc::new(ScriptedClient::constant(reply)) as Arc<dyn ModelClient>)
}

#[tokio::test]
async fn suites_cover_every_pair_and_resume() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let suite = Suite::bundled(server.base_url());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.jsonl");
    let config = AgentConfig::default();
    let _slots = common::slots(4).await;

    let half = RunOptions {
        seeds_per_task: 5,
        max_steps: 1,
        workers: 4,
        results_path: Some(path.clone()),
        ..RunOptions::default()
    };
    let first = run_suite(&suite, &config, constant_clients("noop()"), &half).await.unwrap();
    assert_eq!(first.records.len(), 35);

    let full = RunOptions {
        seeds_per_task: 10,
        resume: true,
        ..half.clone()
    };
    let resumed = run_suite(&suite, &config, constant_clients("noop()"), &full).await.unwrap();
    assert_eq!(resumed.records.len(), 70);
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines, 70, "the first 35 episodes were not rerun");
    for t in &suite.tasks {
        let seeds: Vec<u64> = resumed.records.iter().filter(|r| &r.task == t).map(|r| r.seed).collect();
        assert_eq!(seeds, (0..10).collect::<Vec<_>>(), "{t}");
    }
    assert!(resumed.records.iter().all(|r| r.steps == 1 && !r.success && !r.aborted));
    assert_eq!(ResultSet::load(&path).unwrap().digest(), resumed.digest());

    let again = run_suite(
        &suite,
        &config,
        constant_clients("noop()"),
        &RunOptions {
            results_path: None,
            resume: false,
            ..full
        },
    )
    .await
    .unwrap();
    assert_eq!(again.digest(), resumed.digest());
}

#[tokio::test]
async fn oracle_clients_succeed_through_the_pipeline() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let suite = Suite::bundled(server.base_url());
    let _slots = common::slots(4).await;
    let clients: ClientFactory =
        Arc::new(|t: &TaskInstance| Arc::new(OracleClient::new(t.oracle_steps())) as Arc<dyn ModelClient>);
    let options = RunOptions {
        seeds_per_task: 2,
        workers: 4,
        ..RunOptions::default()
    };
    let set = run_suite(&suite, &AgentConfig::default(), clients, &options).await.unwrap();
    let failed: Vec<_> = set.records.iter().filter(|r| !r.success).collect();
    assert!(failed.is_empty(), "{failed:?}");
    let stats = set.stats(1000, 0).unwrap();
    assert_eq!((stats.success_rate, stats.std_err), (1.0, 0.0));
}
