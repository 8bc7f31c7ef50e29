//! The flag-configurable language-model agent.

mod client;
mod prompt;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{build_catalog, describe, parse, ActionCatalog, ActionSet};
use crate::env::{Budgets, EnvConfig, Observation};
use crate::observation::{CharEstimator, CoordsMode, RenderFlags, TokenEstimator};

pub use client::{
    ClientError, Exchange, FnClient, HttpClient, ModelClient, OracleClient, RecordingClient, ReplayClient,
    Sampling, ScriptedClient, API_KEY_VAR, ENDPOINT_VAR, MODEL_VAR,
};
pub use prompt::{
    build_prompt, extract_tag, prompt_tokens, retry_message, split_completion, Message, Role, SectionKind,
    ACTION_HISTORY_HEADER, ACTION_SPACE_HEADER, AXTREE_HEADER, CHAT_HEADER, DOM_HEADER, ERROR_HISTORY_HEADER,
    EXAMPLE_HEADER, FOCUSED_HEADER, INSTRUCTION_HEADER, LAST_ERROR_HEADER, SYSTEM_PROMPT, TABS_HEADER,
    THINK_HISTORY_HEADER, TRUNCATION_ORDER,
};

/// Agent feature flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub use_thinking: bool,
    pub use_action_history: bool,
    pub use_error_history: bool,
    pub use_think_history: bool,
    pub use_focused_element: bool,
    pub use_last_error: bool,
    /// Include the pruned HTML next to the accessibility tree.
    pub use_html: bool,
    pub coords_mode: CoordsMode,
    pub extract_visible_tag: bool,
    pub extract_clickable_tag: bool,
    pub filter_visible_only: bool,
    pub multi_actions: bool,
    pub action_set: ActionSet,
    pub individual_examples: bool,
    pub long_description: bool,
    pub max_prompt_tokens: usize,
    pub max_retries: u32,
    pub sampling: Sampling,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            use_thinking: true,
            use_action_history: true,
            use_error_history: false,
            use_think_history: false,
            use_focused_element: false,
            use_last_error: true,
            use_html: false,
            coords_mode: CoordsMode::None,
            extract_visible_tag: true,
            extract_clickable_tag: true,
            filter_visible_only: false,
            multi_actions: false,
            action_set: ActionSet::Bid,
            individual_examples: true,
            long_description: true,
            max_prompt_tokens: 40_000,
            max_retries: 4,
            sampling: Sampling::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("action_set bid+coord needs coordinates in the observation (coords_mode is none)")]
    CoordsRequired,
    #[error("unknown preset {0:?}; known presets: gpt-4o, gpt-3.5, llama3")]
    UnknownPreset(String),
}

impl AgentConfig {
    /// The tuned configurations for three model families.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = Self::default();
        match name {
            "gpt-4o" => Ok(base),
            "gpt-3.5" => Ok(Self {
                extract_clickable_tag: false,
                long_description: false,
                max_prompt_tokens: 15_000,
                ..base
            }),
            "llama3" => Ok(Self {
                use_think_history: true,
                use_focused_element: true,
                use_last_error: false,
                extract_clickable_tag: false,
                long_description: false,
                max_prompt_tokens: 8_000,
                ..base
            }),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.action_set == ActionSet::BidCoord && self.coords_mode == CoordsMode::None {
            return Err(ConfigError::CoordsRequired);
        }
        Ok(())
    }

    pub fn render_flags(&self) -> RenderFlags {
        RenderFlags {
            coords_mode: self.coords_mode,
            show_visible_tag: self.extract_visible_tag,
            show_clickable_tag: self.extract_clickable_tag,
            visible_only: self.filter_visible_only,
        }
    }

    pub fn catalog(&self) -> ActionCatalog {
        build_catalog(self.action_set, self.multi_actions)
    }

    pub fn action_description(&self) -> String {
        describe(&self.catalog(), self.long_description, self.individual_examples)
    }

    /// Observation settings matching these flags. Page channels are left
    /// unbudgeted; the prompt builder fits them to `max_prompt_tokens`.
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            render: self.render_flags(),
            budgets: Budgets::default(),
            include_dom: self.use_html,
            ..EnvConfig::default()
        }
    }

    /// Stable hash of the configuration.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).unwrap()))
    }
}

/// One past step as remembered by the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    pub action: String,
    pub thought: Option<String>,
    pub error: Option<String>,
}

/// Append a step, keeping the error and thought only when their history flags are on.
pub fn update_history(history: &mut Vec<HistoryEntry>, entry: HistoryEntry, config: &AgentConfig) {
    history.push(HistoryEntry {
        error: entry.error.filter(|_| config.use_error_history),
        thought: entry.thought.filter(|_| config.use_think_history),
        ..entry
    });
}

/// The decision for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActOutcome {
    pub action: String,
    pub thought: Option<String>,
    /// Completions requested beyond the first.
    pub retries: u32,
    /// Set when every attempt failed to parse; the action is then `noop()`.
    pub error: Option<String>,
    pub prompt: Vec<Message>,
    pub completions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Request a completion and parse it, re-prompting with the parse error up
/// to `config.max_retries` more times.
pub async fn act(
    obs: &Observation,
    history: &[HistoryEntry],
    config: &AgentConfig,
    catalog: &ActionCatalog,
    action_description: &str,
    client: &dyn ModelClient,
    estimator: &dyn TokenEstimator,
) -> Result<ActOutcome, AgentError> {
    let prompt = build_prompt(obs, history, config, action_description, estimator);
    let mut messages = prompt.clone();
    let mut completions = Vec::new();
    let mut last_error = String::new();
    let mut last_thought = None;
    for attempt in 0..=config.max_retries {
        let completion = client.complete(&messages, &config.sampling).await?;
        completions.push(completion.clone());
        let (thought, action) = split_completion(&completion);
        match parse(&action, catalog) {
            Ok(_) => {
                return Ok(ActOutcome {
                    action,
                    thought,
                    retries: attempt,
                    error: None,
                    prompt,
                    completions,
                })
            }
            Err(e) => {
                last_error = e.to_string();
                last_thought = thought;
                messages.push(Message::assistant(completion));
                messages.push(Message::user(retry_message(&last_error)));
            }
        }
    }
    Ok(ActOutcome {
        action: "noop()".to_string(),
        thought: last_thought,
        retries: config.max_retries,
        error: Some(last_error),
        prompt,
        completions,
    })
}

/// A configured agent with its episode history.
pub struct Agent {
    config: AgentConfig,
    catalog: ActionCatalog,
    description: String,
    client: Arc<dyn ModelClient>,
    estimator: Arc<dyn TokenEstimator>,
    history: Vec<HistoryEntry>,
}

impl Agent {
    pub fn new(config: AgentConfig, client: Arc<dyn ModelClient>) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            catalog: config.catalog(),
            description: config.action_description(),
            config,
            client,
            estimator: Arc::new(CharEstimator),
            history: Vec::new(),
        })
    }

    pub fn with_estimator(mut self, estimator: Arc<dyn TokenEstimator>) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Forget the previous episode.
    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn prompt(&self, obs: &Observation) -> Vec<Message> {
        build_prompt(obs, &self.history, &self.config, &self.description, self.estimator.as_ref())
    }

    pub async fn act(&self, obs: &Observation) -> Result<ActOutcome, AgentError> {
        act(
            obs,
            &self.history,
            &self.config,
            &self.catalog,
            &self.description,
            self.client.as_ref(),
            self.estimator.as_ref(),
        )
        .await
    }

    /// Remember a finished step; `error` is the error the step produced.
    pub fn record(&mut self, step: u64, outcome: &ActOutcome, error: Option<String>) {
        update_history(
            &mut self.history,
            HistoryEntry {
                step,
                action: outcome.action.clone(),
                thought: outcome.thought.clone(),
                error,
            },
            &self.config,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_actions_need_coordinates() {
        let cfg = AgentConfig { action_set: ActionSet::BidCoord, ..AgentConfig::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::CoordsRequired));
        let cfg = AgentConfig { coords_mode: CoordsMode::Center, ..cfg };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn history_keeps_only_flagged_fields() {
        let cfg = AgentConfig::default();
        let mut h = Vec::new();
        let e = HistoryEntry { step: 1, action: "noop()".into(), thought: Some("t".into()), error: Some("e".into()) };
        update_history(&mut h, e.clone(), &cfg);
        assert_eq!(h[0].thought, None);
        assert_eq!(h[0].error, None);
        let cfg = AgentConfig { use_error_history: true, use_think_history: true, ..cfg };
        update_history(&mut h, e.clone(), &cfg);
        assert_eq!(h[1], e);
    }
}
