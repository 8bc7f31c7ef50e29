//! Random search over agent flags.

use std::collections::BTreeMap;

use async_trait::async_trait;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{run_suite, ClientFactory, HarnessError, ResultSet, RunOptions, Stats, StatsError, Suite};
use crate::agent::AgentConfig;

/// Allowed values per flag; flags not listed keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Vec<Value>>);

impl Default for SearchSpace {
    /// Every boolean flag, both coordinate renderings and both action sets.
    fn default() -> Self {
        let bools = [
            "use_thinking",
            "use_action_history",
            "use_error_history",
            "use_think_history",
            "use_focused_element",
            "use_last_error",
            "extract_visible_tag",
            "extract_clickable_tag",
            "filter_visible_only",
            "multi_actions",
            "individual_examples",
            "long_description",
        ];
        let mut space: BTreeMap<String, Vec<Value>> = bools
            .iter()
            .map(|f| (f.to_string(), vec![Value::Bool(false), Value::Bool(true)]))
            .collect();
        space.insert("coords_mode".into(), vec!["none".into(), "center".into(), "box".into()]);
        space.insert("action_set".into(), vec!["bid".into(), "bid+coord".into()]);
        Self(space)
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("budget must be at least 1")]
    NoBudget,
    #[error("unknown flag {0:?} in the search space")]
    UnknownFlag(String),
    #[error("flag {0:?} has no candidate values")]
    EmptyFlag(String),
    #[error("invalid value for {flag}: {message}")]
    BadValue { flag: String, message: String },
    #[error("no valid configuration in the search space")]
    NoValidConfig,
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

const MAX_DRAWS: usize = 10_000;

/// Draw one configuration uniformly among the valid ones, by rejection.
pub fn sample_config(space: &SearchSpace, base: &AgentConfig, rng: &mut ChaCha8Rng) -> Result<AgentConfig, SearchError> {
    let base_json = serde_json::to_value(base).unwrap();
    for (flag, values) in &space.0 {
        if base_json.get(flag).is_none() {
            return Err(SearchError::UnknownFlag(flag.clone()));
        }
        if values.is_empty() {
            return Err(SearchError::EmptyFlag(flag.clone()));
        }
    }
    for _ in 0..MAX_DRAWS {
        let mut candidate = base_json.clone();
        for (flag, values) in &space.0 {
            candidate[flag] = values.choose(rng).unwrap().clone();
        }
        let config: AgentConfig = serde_json::from_value(candidate).map_err(|e| SearchError::BadValue {
            flag: e.to_string(),
            message: "does not fit the configuration schema".into(),
        })?;
        if config.validate().is_ok() {
            return Ok(config);
        }
    }
    Err(SearchError::NoValidConfig)
}

/// Scores one configuration.
#[async_trait]
pub trait ConfigEvaluator: Send + Sync {
    async fn evaluate(&self, config: &AgentConfig) -> Result<ResultSet, HarnessError>;
}

/// Evaluates configurations by running a suite.
pub struct SuiteEvaluator {
    pub suite: Suite,
    pub clients: ClientFactory,
    pub options: RunOptions,
}

#[async_trait]
impl ConfigEvaluator for SuiteEvaluator {
    async fn evaluate(&self, config: &AgentConfig) -> Result<ResultSet, HarnessError> {
        let mut options = self.options.clone();
        // Each candidate gets its own results; resuming across configs would mix them.
        options.resume = false;
        if let Some(p) = &options.results_path {
            let name = format!("{}-{}", p.file_stem().unwrap_or_default().to_string_lossy(), &config.digest()[..12]);
            options.results_path = Some(p.with_file_name(format!("{name}.jsonl")));
        }
        run_suite(&self.suite, config, self.clients.clone(), &options).await
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub config: AgentConfig,
    pub stats: Stats,
    pub mean_steps: f64,
    pub results_digest: String,
}

/// Sample `budget` configurations, evaluate each, and rank them by success
/// rate; ties go to fewer mean steps, then to the earlier sample.
pub async fn search(
    space: &SearchSpace,
    base: &AgentConfig,
    budget: usize,
    evaluator: &dyn ConfigEvaluator,
    rng_seed: u64,
    n_boot: usize,
) -> Result<Vec<LeaderboardEntry>, SearchError> {
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut board = Vec::with_capacity(budget);
    for _ in 0..budget {
        let config = sample_config(space, base, &mut rng)?;
        let results = evaluator.evaluate(&config).await?;
        let stats = results.stats(n_boot, rng_seed)?;
        board.push(LeaderboardEntry {
            mean_steps: results.mean_steps(),
            results_digest: results.digest(),
            config,
            stats,
        });
    }
    // Stable sort keeps sampling order among exact ties.
    board.sort_by(|a, b| {
        b.stats
            .success_rate
            .total_cmp(&a.stats.success_rate)
            .then(a.mean_steps.total_cmp(&b.mean_steps))
    });
    Ok(board)
}
