//! The episode loop: task protocol, reset/step, observation assembly, traces.

mod oracle;
mod trace;

use std::sync::Arc;

use async_trait::async_trait;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{execute, parse, ActionCatalog, ExecResult};
use crate::chat::{Chat, ChatMessage, ChatRole};
use crate::driver::{DriverError, NavCommand, Session};
use crate::observation::{
    augment, focused_bid, render_text, snapshot, som_overlay, truncate_to_budget, AxTree,
    BidString, CharEstimator, DomSnapshot, ObservationError, RenderFlags, Structure,
    TokenEstimator,
};

pub use oracle::{run_oracle, AxTarget, OracleStep};
pub use trace::{TraceRecord, TraceWriter};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("this task has no oracle")]
    NoOracle,
    #[error("oracle failed: {0}")]
    Oracle(String),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Outcome of a task's validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub reward: f64,
    pub done: bool,
    /// Reply posted to the chat on the user's behalf.
    pub message: Option<String>,
}

impl Validation {
    pub fn success() -> Self {
        Self {
            reward: 1.0,
            done: true,
            message: None,
        }
    }

    pub fn pending() -> Self {
        Self {
            reward: 0.0,
            done: false,
            message: None,
        }
    }
}

/// The four-function task protocol.
#[async_trait]
pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    fn seed(&self) -> u64;

    /// Prepare the browser and backing state; return the goal text.
    async fn setup(&mut self, session: &mut Session, chat: &Chat) -> Result<String, TaskError>;

    /// Check the current state. Must not change page state.
    async fn validate(&self, session: &mut Session, chat: &Chat) -> Validation;

    /// Release anything setup acquired.
    async fn teardown(&mut self, session: &mut Session) -> Result<(), TaskError>;

    /// Scripted solution, one step per action.
    fn oracle(&self) -> Vec<OracleStep> {
        Vec::new()
    }

    /// Solve the task by running the oracle through the action layer.
    async fn cheat(&self, session: &mut Session, chat: &Chat) -> Result<(), TaskError> {
        let steps = self.oracle();
        if steps.is_empty() {
            return Err(TaskError::NoOracle);
        }
        run_oracle(&steps, session, chat).await
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode is done; call reset before stepping again")]
    EpisodeDone,
    #[error("no task: call reset first")]
    NoTask,
    #[error("task setup failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Per-channel token budgets applied while observing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub axtree: Option<usize>,
    pub dom: Option<usize>,
}

#[derive(Clone)]
pub struct EnvConfig {
    pub render: RenderFlags,
    pub budgets: Budgets,
    pub include_dom: bool,
    pub screenshot: bool,
    /// Draw Set-of-Mark labels on the screenshot.
    pub som: bool,
    pub estimator: Arc<dyn TokenEstimator>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            render: RenderFlags::default(),
            budgets: Budgets::default(),
            include_dom: false,
            screenshot: false,
            som: false,
            estimator: Arc::new(CharEstimator),
        }
    }
}

impl std::fmt::Debug for EnvConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvConfig")
            .field("render", &self.render)
            .field("budgets", &self.budgets)
            .field("include_dom", &self.include_dom)
            .field("screenshot", &self.screenshot)
            .field("som", &self.som)
            .finish()
    }
}

/// Everything the agent sees at one step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub chat: Vec<ChatMessage>,
    pub open_pages: Vec<String>,
    pub active_page: usize,
    pub dom_text: Option<String>,
    pub axtree_text: String,
    pub focused_bid: Option<BidString>,
    pub last_action_error: Option<String>,
    pub dom: Option<DomSnapshot>,
    pub axtree: Option<AxTree>,
    #[serde(skip)]
    pub screenshot: Option<RgbImage>,
}

impl Observation {
    /// The goal: the first user message of the episode.
    pub fn goal(&self) -> &str {
        self.chat
            .iter()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.text.as_str())
            .unwrap_or_default()
    }

    /// Stable hash of the observation's textual content.
    pub fn digest(&self) -> String {
        let payload = serde_json::json!({
            "chat": self.chat,
            "open_pages": self.open_pages,
            "active_page": self.active_page,
            "dom_text": self.dom_text,
            "axtree_text": self.axtree_text,
            "focused_bid": self.focused_bid,
            "last_action_error": self.last_action_error,
        });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: u64,
    pub exec: ExecResult,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub struct Env {
    session: Session,
    chat: Chat,
    catalog: ActionCatalog,
    config: EnvConfig,
    task: Option<Box<dyn Task>>,
    step: u64,
    done: bool,
    last_error: Option<String>,
    trace: Option<TraceWriter>,
    chat_mark: usize,
}

impl Env {
    pub fn new(session: Session, catalog: ActionCatalog, config: EnvConfig) -> Self {
        Self {
            session,
            chat: Chat::new(),
            catalog,
            config,
            task: None,
            step: 0,
            done: false,
            last_error: None,
            trace: None,
            chat_mark: 0,
        }
    }

    /// Use an externally owned chat, e.g. one shared with a live chat panel.
    pub fn with_chat(mut self, chat: Chat) -> Self {
        self.chat = chat;
        self
    }

    pub fn with_trace(mut self, trace: TraceWriter) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn set_trace(&mut self, trace: Option<TraceWriter>) {
        self.trace = trace;
    }

    pub fn trace(&self) -> Option<&TraceWriter> {
        self.trace.as_ref()
    }

    pub fn chat(&self) -> &Chat {
        &self.chat
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn set_catalog(&mut self, catalog: ActionCatalog) {
        self.catalog = catalog;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: EnvConfig) {
        self.config = config;
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn task(&self) -> Option<&dyn Task> {
        self.task.as_deref()
    }

    /// Back to a single blank tab.
    async fn reset_pages(&mut self) -> Result<(), DriverError> {
        self.session.sync_pages().await?;
        while self.session.pages().len() > 1 {
            self.session.navigate(NavCommand::TabClose).await?;
        }
        self.session
            .navigate(NavCommand::Goto("about:blank".into()))
            .await
    }

    /// Start an episode: tear down the previous task, run the new task's
    /// setup and post its goal as the first chat message.
    pub async fn reset(&mut self, task: Box<dyn Task>) -> Result<Observation, EnvError> {
        self.close_task().await;
        self.chat.clear();
        self.step = 0;
        self.done = false;
        self.last_error = None;
        self.chat_mark = 0;
        self.reset_pages().await?;

        let mut task = task;
        let goal = task
            .setup(&mut self.session, &self.chat)
            .await
            .map_err(|e| EnvError::Setup(e.to_string()))?;
        self.chat.push(ChatRole::User, goal.clone(), 0);
        let name = task.name().to_string();
        let seed = task.seed();
        self.task = Some(task);
        let obs = self.observe().await?;
        if let Some(trace) = &self.trace {
            trace.write(&TraceRecord::Reset {
                task: name,
                seed,
                goal,
                obs_digest: obs.digest(),
            });
        }
        self.chat_mark = self.chat.len();
        Ok(obs)
    }

    pub async fn step(&mut self, action_text: &str) -> Result<StepOutcome, EnvError> {
        self.step_with_error(action_text, None).await
    }

    /// Step, additionally surfacing an agent-side error (such as exhausted
    /// parse retries) as this step's last action error.
    pub async fn step_with_error(
        &mut self,
        action_text: &str,
        agent_error: Option<String>,
    ) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if self.task.is_none() {
            return Err(EnvError::NoTask);
        }
        self.step += 1;
        let step = self.step;

        let exec = match parse(action_text, &self.catalog) {
            Ok(calls) => execute(&calls, &mut self.session, &self.chat, step).await,
            Err(e) => ExecResult {
                executed: 0,
                last_error: Some(e.to_string()),
                chat_emissions: Vec::new(),
            },
        };
        self.last_error = match (&agent_error, &exec.last_error) {
            (Some(a), Some(b)) if a != b => Some(format!("{a}\n{b}")),
            (Some(a), _) => Some(a.clone()),
            (None, b) => b.clone(),
        };

        let task = self.task.as_ref().expect("checked above");
        let validation = task.validate(&mut self.session, &self.chat).await;
        if let Some(msg) = &validation.message {
            self.chat.push(ChatRole::User, msg.clone(), step);
        }
        self.done = validation.done;

        let observation = match self.observe().await {
            Ok(obs) => obs,
            Err(e) => self.degraded_observation(e.to_string()),
        };

        if let Some(trace) = &self.trace {
            let delta = self.chat.messages().split_off(self.chat_mark.min(self.chat.len()));
            trace.write(&TraceRecord::Step {
                step,
                action: action_text.to_string(),
                reward: validation.reward,
                done: validation.done,
                error: self.last_error.clone(),
                chat_delta: delta,
                obs_digest: observation.digest(),
            });
        }
        self.chat_mark = self.chat.len();

        Ok(StepOutcome {
            observation,
            reward: validation.reward,
            done: validation.done,
            info: StepInfo { step, exec },
        })
    }

    /// Observation when the page could not be snapshotted; the failure is
    /// reported through the error channel instead of ending the loop.
    fn degraded_observation(&mut self, error: String) -> Observation {
        let combined = match &self.last_error {
            Some(prev) => format!("{prev}\n{error}"),
            None => error,
        };
        self.last_error = Some(combined.clone());
        Observation {
            chat: self.chat.messages(),
            open_pages: self.session.page_urls(),
            active_page: self.session.active_index(),
            dom_text: None,
            axtree_text: String::new(),
            focused_bid: None,
            last_action_error: Some(combined),
            dom: None,
            axtree: None,
            screenshot: None,
        }
    }

    /// Assemble an observation of the current state.
    pub async fn observe(&mut self) -> Result<Observation, EnvError> {
        let (dom, ax) = snapshot(&mut self.session).await?;
        let dom = augment(&mut self.session, dom).await?;
        let focused = focused_bid(&mut self.session).await?;
        let cfg = &self.config;
        let est = cfg.estimator.as_ref();

        let mut axtree_text = render_text(
            Structure::Ax {
                tree: &ax,
                augments: &dom.augments,
            },
            &cfg.render,
        );
        if let Some(b) = cfg.budgets.axtree {
            axtree_text = truncate_to_budget(&axtree_text, b, est);
        }
        let dom_text = cfg.include_dom.then(|| {
            let text = render_text(Structure::Dom(&dom), &cfg.render);
            match cfg.budgets.dom {
                Some(b) => truncate_to_budget(&text, b, est),
                None => text,
            }
        });
        let screenshot = if cfg.screenshot {
            let shot = self.session.screenshot().await?;
            Some(if cfg.som {
                let augs: Vec<_> = dom.augments.values().cloned().collect();
                som_overlay(&shot, &augs)
            } else {
                shot
            })
        } else {
            None
        };
        let _ = self.session.active_url().await;
        Ok(Observation {
            chat: self.chat.messages(),
            open_pages: self.session.page_urls(),
            active_page: self.session.active_index(),
            dom_text,
            axtree_text,
            focused_bid: focused.filter(|b| dom.augments.contains_key(b)),
            last_action_error: self.last_error.clone(),
            dom: Some(dom),
            axtree: Some(ax),
            screenshot,
        })
    }

    /// Run the current task's oracle directly (outside the step loop).
    pub async fn cheat(&mut self) -> Result<(), EnvError> {
        let task = self.task.as_ref().ok_or(EnvError::NoTask)?;
        task.cheat(&mut self.session, &self.chat)
            .await
            .map_err(|e| EnvError::Setup(e.to_string()))
    }

    /// Validate without stepping.
    pub async fn validate(&mut self) -> Result<Validation, EnvError> {
        let task = self.task.as_ref().ok_or(EnvError::NoTask)?;
        Ok(task.validate(&mut self.session, &self.chat).await)
    }

    async fn close_task(&mut self) {
        if let Some(mut task) = self.task.take() {
            if let Err(e) = task.teardown(&mut self.session).await {
                tracing::warn!("teardown of {} failed: {e}", task.name());
            }
        }
    }

    /// Tear down the current task and hand the session back.
    pub async fn close(mut self) -> Session {
        self.close_task().await;
        self.session
    }
}
