//! Evaluation protocol: episodes, suites, statistics, search, reports and the
//! interactive chat endpoint.

pub mod interactive;
mod report;
mod search;
mod stats;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::agent::{Agent, AgentConfig, ConfigError, ModelClient};
use crate::driver::{DriverError, LaunchOptions, Session};
use crate::env::{Env, Task, TraceRecord, TraceWriter};
use crate::tasks::{self, Manifest, TaskInstance};

pub use report::{report, ReportFormat};
pub use search::{
    sample_config, search, ConfigEvaluator, LeaderboardEntry, SearchError, SearchSpace, SuiteEvaluator,
};
pub use stats::{stratified_bootstrap, Stats, StatsError, DEFAULT_N_BOOT};

/// Step cap per episode.
pub const MAX_STEPS: u32 = 15;
/// Seeds evaluated per task by default.
pub const SEEDS_PER_TASK: u64 = 10;

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: String,
    pub seed: u64,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub wall_time_s: f64,
    /// Path of the episode's JSONL trace, when traces are kept.
    pub trace: Option<String>,
    /// The episode stopped early because of an infrastructure or model failure.
    #[serde(default)]
    pub aborted: bool,
    #[serde(default)]
    pub error: Option<String>,
}

impl EpisodeRecord {
    pub fn key(&self) -> (String, u64) {
        (self.task.clone(), self.seed)
    }

    fn failed(task: &str, seed: u64, steps: u32, started: Instant, error: String) -> Self {
        Self {
            task: task.to_string(),
            seed,
            steps,
            reward: 0.0,
            success: false,
            wall_time_s: started.elapsed().as_secs_f64(),
            trace: None,
            aborted: true,
            error: Some(error),
        }
    }
}

/// Run one episode: reset with `task`, then alternate agent decisions and
/// environment steps until the task reports done or `max_steps` is reached.
pub async fn run_episode(agent: &mut Agent, env: &mut Env, task: Box<dyn Task>, max_steps: u32) -> EpisodeRecord {
    run_episode_with(agent, env, task, max_steps, |_, _, _| {}).await
}

/// Like [`run_episode`], calling `on_step(step, reward, done)` after every
/// environment step.
pub async fn run_episode_with(
    agent: &mut Agent,
    env: &mut Env,
    task: Box<dyn Task>,
    max_steps: u32,
    mut on_step: impl FnMut(u64, f64, bool) + Send,
) -> EpisodeRecord {
    let name = task.name().to_string();
    let seed = task.seed();
    let started = Instant::now();
    agent.reset();
    let mut obs = match env.reset(task).await {
        Ok(obs) => obs,
        Err(e) => return EpisodeRecord::failed(&name, seed, 0, started, e.to_string()),
    };
    let mut steps = 0;
    let mut reward = 0.0;
    while steps < max_steps {
        let decision = match agent.act(&obs).await {
            Ok(d) => d,
            Err(e) => return EpisodeRecord::failed(&name, seed, steps, started, e.to_string()),
        };
        if let Some(trace) = env.trace() {
            trace.write(&TraceRecord::Agent {
                step: env.step_index() + 1,
                prompt: decision
                    .prompt
                    .iter()
                    .map(|m| (serde_json::to_value(m.role).unwrap().as_str().unwrap().to_string(), m.content.clone()))
                    .collect(),
                completions: decision.completions.clone(),
                action: decision.action.clone(),
                thought: decision.thought.clone(),
                error: decision.error.clone(),
            });
        }
        let outcome = match env.step_with_error(&decision.action, decision.error.clone()).await {
            Ok(o) => o,
            Err(e) => return EpisodeRecord::failed(&name, seed, steps, started, e.to_string()),
        };
        steps += 1;
        agent.record(outcome.info.step, &decision, outcome.observation.last_action_error.clone());
        reward = outcome.reward;
        on_step(outcome.info.step, reward, outcome.done);
        obs = outcome.observation;
        if outcome.done {
            break;
        }
    }
    EpisodeRecord {
        task: name,
        seed,
        steps,
        reward,
        success: reward == 1.0,
        wall_time_s: started.elapsed().as_secs_f64(),
        trace: env.trace().map(|t| t.path().display().to_string()),
        aborted: false,
        error: None,
    }
}

/// Episode records of one evaluation, unique per (task, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub records: Vec<EpisodeRecord>,
    pub config_digest: String,
    pub manifest_digest: String,
}

impl ResultSet {
    pub fn new(config_digest: impl Into<String>, manifest_digest: impl Into<String>) -> Self {
        Self {
            records: Vec::new(),
            config_digest: config_digest.into(),
            manifest_digest: manifest_digest.into(),
        }
    }

    /// Add a record, replacing any earlier one with the same key.
    pub fn insert(&mut self, record: EpisodeRecord) {
        self.records.retain(|r| r.key() != record.key());
        self.records.push(record);
    }

    /// Records grouped by task, tasks sorted by name.
    pub fn by_task(&self) -> BTreeMap<&str, Vec<&EpisodeRecord>> {
        let mut out: BTreeMap<&str, Vec<&EpisodeRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.task.as_str()).or_default().push(r);
        }
        for v in out.values_mut() {
            v.sort_by_key(|r| r.seed);
        }
        out
    }

    /// Success outcomes (0 or 1) per task, in `by_task` order.
    pub fn strata(&self) -> Vec<Vec<f64>> {
        self.by_task()
            .values()
            .map(|rs| rs.iter().map(|r| if r.success { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    pub fn stats(&self, n_boot: usize, rng_seed: u64) -> Result<Stats, StatsError> {
        stratified_bootstrap(&self.strata(), n_boot, rng_seed)
    }

    pub fn mean_steps(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.steps as f64).sum::<f64>() / self.records.len() as f64
    }

    /// Hash of the outcome-relevant content; wall times and paths are ignored.
    pub fn digest(&self) -> String {
        let mut rows: Vec<_> = self
            .records
            .iter()
            .map(|r| (r.task.as_str(), r.seed, r.steps, r.reward, r.success, r.aborted))
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let payload = serde_json::json!({
            "config": self.config_digest,
            "manifest": self.manifest_digest,
            "records": rows,
        });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }

    /// Read a results file (one record per line). Unparseable lines, such as
    /// a line cut short by an interruption, are skipped.
    pub fn load_records(path: impl AsRef<Path>) -> std::io::Result<Vec<EpisodeRecord>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            if let Ok(r) = serde_json::from_str(&line?) {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let meta: ResultsMeta = std::fs::read_to_string(meta_path(path))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default();
        let mut set = Self::new(meta.config_digest, meta.manifest_digest);
        for r in Self::load_records(path)? {
            set.insert(r);
        }
        Ok(set)
    }
}

/// Digests stored next to a results file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ResultsMeta {
    config_digest: String,
    manifest_digest: String,
    config: Option<AgentConfig>,
}

fn meta_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    results.with_file_name(name)
}

/// Which tasks to run and where their pages are served.
#[derive(Debug, Clone)]
pub struct Suite {
    pub base_url: String,
    pub tasks: Vec<String>,
}

impl Suite {
    /// Every bundled task, in registry order.
    pub fn bundled(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            tasks: tasks::registry().iter().map(|d| d.name.to_string()).collect(),
        }
    }
}

/// Builds the model client for one episode.
pub type ClientFactory = Arc<dyn Fn(&TaskInstance) -> Arc<dyn ModelClient> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seeds_per_task: u64,
    pub max_steps: u32,
    pub workers: usize,
    /// Append records here as they finish.
    pub results_path: Option<PathBuf>,
    /// Skip (task, seed) pairs already in the results file.
    pub resume: bool,
    /// Keep one JSONL trace per episode in this directory.
    pub trace_dir: Option<PathBuf>,
    pub launch: LaunchOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seeds_per_task: SEEDS_PER_TASK,
            max_steps: MAX_STEPS,
            workers: 1,
            results_path: None,
            resume: false,
            trace_dir: None,
            launch: LaunchOptions::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Instantiate(#[from] tasks::InstantiateError),
    #[error("browser launch failed: {0}")]
    Launch(#[from] DriverError),
    #[error("results file: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker failed: {0}")]
    Worker(String),
}

type Job = (String, u64);

/// Run every (task, seed < seeds_per_task) pair of the suite, one browser per
/// worker, persisting each record as soon as it completes.
pub async fn run_suite(
    suite: &Suite,
    config: &AgentConfig,
    clients: ClientFactory,
    options: &RunOptions,
) -> Result<ResultSet, HarnessError> {
    config.validate()?;
    let manifest = Manifest::build();
    let mut set = ResultSet::new(config.digest(), manifest.digest());

    let mut jobs: VecDeque<Job> = VecDeque::new();
    for name in &suite.tasks {
        let def = tasks::definition(name).ok_or_else(|| tasks::InstantiateError::UnknownTask(name.clone()))?;
        for seed in 0..options.seeds_per_task {
            if seed >= def.instance_cap {
                return Err(tasks::InstantiateError::SeedOutOfRange {
                    task: name.clone(),
                    seed,
                    cap: def.instance_cap,
                }
                .into());
            }
            jobs.push_back((name.clone(), seed));
        }
    }

    let mut out = None;
    if let Some(path) = &options.results_path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        if options.resume && path.exists() {
            let wanted: HashSet<Job> = jobs.iter().cloned().collect();
            for r in ResultSet::load_records(path)? {
                if wanted.contains(&r.key()) {
                    set.insert(r);
                }
            }
            let done: HashSet<Job> = set.records.iter().map(EpisodeRecord::key).collect();
            jobs.retain(|j| !done.contains(j));
        }
        let file = OpenOptions::new()
            .create(true)
            .append(options.resume)
            .write(true)
            .truncate(!options.resume)
            .open(path)?;
        let meta = ResultsMeta {
            config_digest: set.config_digest.clone(),
            manifest_digest: set.manifest_digest.clone(),
            config: Some(config.clone()),
        };
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&meta).unwrap())?;
        out = Some(file);
    }
    if let Some(dir) = &options.trace_dir {
        std::fs::create_dir_all(dir)?;
    }

    let n_workers = options.workers.max(1).min(jobs.len().max(1));
    let queue = Arc::new(Mutex::new(jobs));
    let (tx, mut rx) = mpsc::unbounded_channel::<EpisodeRecord>();
    let mut handles = Vec::new();
    for _ in 0..n_workers {
        let queue = queue.clone();
        let tx = tx.clone();
        let clients = clients.clone();
        let config = config.clone();
        let options = options.clone();
        let base_url = suite.base_url.clone();
        handles.push(tokio::spawn(async move {
            worker(queue, tx, clients, config, options, base_url).await
        }));
    }
    drop(tx);

    // Single writer: records are persisted one line at a time, in completion order.
    while let Some(record) = rx.recv().await {
        if let Some(f) = out.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&record).unwrap())?;
            f.flush()?;
        }
        set.insert(record);
    }
    for h in handles {
        h.await.map_err(|e| HarnessError::Worker(e.to_string()))??;
    }

    let order: BTreeMap<&str, usize> = suite.tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    set.records.sort_by_key(|r| (order.get(r.task.as_str()).copied().unwrap_or(usize::MAX), r.seed));
    Ok(set)
}

async fn worker(
    queue: Arc<Mutex<VecDeque<Job>>>,
    tx: mpsc::UnboundedSender<EpisodeRecord>,
    clients: ClientFactory,
    config: AgentConfig,
    options: RunOptions,
    base_url: String,
) -> Result<(), HarnessError> {
    if queue.lock().unwrap().is_empty() {
        return Ok(());
    }
    let session = Session::launch(options.launch.clone()).await?;
    let mut env = Env::new(session, config.catalog(), config.env_config());
    loop {
        let Some((name, seed)) = queue.lock().unwrap().pop_front() else {
            break;
        };
        let instance = tasks::instantiate(&name, seed)?.with_base_url(&base_url);
        let client = clients(&instance);
        let mut agent = Agent::new(config.clone(), client)?;
        let trace = match &options.trace_dir {
            Some(dir) => Some(TraceWriter::create(dir.join(format!("{name}-{seed}.jsonl")))?),
            None => None,
        };
        env.set_trace(trace);
        let record = run_episode(&mut agent, &mut env, Box::new(instance), options.max_steps).await;
        if tx.send(record).is_err() {
            break;
        }
    }
    env.close().await;
    Ok(())
}
