//! Model backends: scripted stubs, record/replay, and an HTTP chat-completions client.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{Message, Role, AXTREE_HEADER};
use crate::env::{OracleStep, TraceRecord, TraceWriter};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("model request failed: {0}")]
    Transport(String),
    #[error("model response malformed: {0}")]
    Malformed(String),
    #[error("model client misconfigured: {0}")]
    Config(String),
    #[error("no more recorded completions")]
    Exhausted,
}

/// Sampling parameters passed to every completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

/// A language model. Implementations must be safe to call concurrently.
#[async_trait]
pub trait ModelClient: Send + Sync {
    async fn complete(&self, messages: &[Message], sampling: &Sampling) -> Result<String, ClientError>;
}

/// Replies with a fixed sequence, then repeats a fallback forever.
#[derive(Debug)]
pub struct ScriptedClient {
    replies: Mutex<VecDeque<String>>,
    fallback: String,
    calls: AtomicUsize,
}

impl ScriptedClient {
    pub fn new<I, S>(replies: I, fallback: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            fallback: fallback.into(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Always replies with the same text.
    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new(Vec::<String>::new(), reply)
    }

    /// Completions requested so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ModelClient for ScriptedClient {
    async fn complete(&self, _messages: &[Message], _sampling: &Sampling) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self.replies.lock().unwrap().pop_front();
        Ok(next.unwrap_or_else(|| self.fallback.clone()))
    }
}

/// Replies computed from the prompt by a closure.
pub struct FnClient<F>(pub F);

#[async_trait]
impl<F> ModelClient for FnClient<F>
where
    F: Fn(&[Message]) -> String + Send + Sync,
{
    async fn complete(&self, messages: &[Message], _sampling: &Sampling) -> Result<String, ClientError> {
        Ok((self.0)(messages))
    }
}

/// Plays a task's oracle through the agent pipeline. Each completion resolves
/// the next oracle step against the accessibility tree quoted in the prompt,
/// exactly as a model reading that prompt would have to.
#[derive(Debug)]
pub struct OracleClient {
    steps: Vec<OracleStep>,
    next: AtomicUsize,
}

impl OracleClient {
    pub fn new(steps: Vec<OracleStep>) -> Self {
        Self {
            steps,
            next: AtomicUsize::new(0),
        }
    }
}

/// The accessibility tree section of a prompt.
fn axtree_section(messages: &[Message]) -> &str {
    let Some(user) = messages.iter().find(|m| m.role == Role::User) else {
        return "";
    };
    let Some(start) = user.content.find(AXTREE_HEADER) else {
        return "";
    };
    let rest = &user.content[start + AXTREE_HEADER.len()..];
    match rest.find("\n\n# ") {
        Some(end) => &rest[..end],
        None => rest,
    }
}

#[async_trait]
impl ModelClient for OracleClient {
    async fn complete(&self, messages: &[Message], _sampling: &Sampling) -> Result<String, ClientError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        let Some(step) = self.steps.get(i) else {
            return Ok("<action>\nnoop()\n</action>".to_string());
        };
        let action = step
            .resolve_in_text(axtree_section(messages))
            .unwrap_or_else(|| "noop()".to_string());
        Ok(format!("<think>\nOracle step {}.\n</think>\n<action>\n{action}\n</action>", i + 1))
    }
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub messages: Vec<Message>,
    pub completion: String,
}

/// Forwards to another client and appends every exchange to a JSONL file.
pub struct RecordingClient {
    inner: Arc<dyn ModelClient>,
    out: Mutex<File>,
}

impl RecordingClient {
    pub fn create(inner: Arc<dyn ModelClient>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            inner,
            out: Mutex::new(File::create(path)?),
        })
    }
}

#[async_trait]
impl ModelClient for RecordingClient {
    async fn complete(&self, messages: &[Message], sampling: &Sampling) -> Result<String, ClientError> {
        use std::io::Write;
        let completion = self.inner.complete(messages, sampling).await?;
        let line = serde_json::to_string(&Exchange {
            messages: messages.to_vec(),
            completion: completion.clone(),
        })
        .map_err(|e| ClientError::Malformed(e.to_string()))?;
        writeln!(self.out.lock().unwrap(), "{line}").map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(completion)
    }
}

/// Replays completions in recorded order, ignoring the prompt.
#[derive(Debug)]
pub struct ReplayClient {
    completions: Mutex<VecDeque<String>>,
}

impl ReplayClient {
    pub fn new(completions: impl IntoIterator<Item = String>) -> Self {
        Self {
            completions: Mutex::new(completions.into_iter().collect()),
        }
    }

    /// Load a file written by [`RecordingClient`].
    pub fn from_recording(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut completions = Vec::new();
        for line in reader.lines() {
            let ex: Exchange = serde_json::from_str(&line?)?;
            completions.push(ex.completion);
        }
        Ok(Self::new(completions))
    }

    /// Load the agent completions of an episode trace.
    pub fn from_trace(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let completions = TraceWriter::read(path)?
            .into_iter()
            .filter_map(|r| match r {
                TraceRecord::Agent { completions, .. } => Some(completions),
                _ => None,
            })
            .flatten();
        Ok(Self::new(completions))
    }
}

#[async_trait]
impl ModelClient for ReplayClient {
    async fn complete(&self, _messages: &[Message], _sampling: &Sampling) -> Result<String, ClientError> {
        self.completions.lock().unwrap().pop_front().ok_or(ClientError::Exhausted)
    }
}

/// A chat-completions style HTTP backend.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    http: reqwest::Client,
}

pub const ENDPOINT_VAR: &str = "WEBGYM_LLM_ENDPOINT";
pub const MODEL_VAR: &str = "WEBGYM_LLM_MODEL";
pub const API_KEY_VAR: &str = "WEBGYM_LLM_API_KEY";

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("static client configuration");
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            http,
        }
    }

    /// Configure from `WEBGYM_LLM_ENDPOINT`, `WEBGYM_LLM_MODEL` and `WEBGYM_LLM_API_KEY`.
    pub fn from_env() -> Result<Self, ClientError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let endpoint = var(ENDPOINT_VAR).ok_or_else(|| ClientError::Config(format!("{ENDPOINT_VAR} is not set")))?;
        let model = var(MODEL_VAR).ok_or_else(|| ClientError::Config(format!("{MODEL_VAR} is not set")))?;
        Ok(Self::new(endpoint, model, var(API_KEY_VAR)))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[async_trait]
impl ModelClient for HttpClient {
    async fn complete(&self, messages: &[Message], sampling: &Sampling) -> Result<String, ClientError> {
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: sampling.temperature,
            max_tokens: sampling.max_tokens,
        };
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed(format!("no choices[0].message.content in {text}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn scripted_client_falls_back_after_its_script() {
        let c = ScriptedClient::new(["a", "b"], "z");
        let s = Sampling::default();
        let mut got = Vec::new();
        for _ in 0..4 {
            got.push(c.complete(&[], &s).await.unwrap());
        }
        assert_eq!(got, ["a", "b", "z", "z"]);
        assert_eq!(c.calls(), 4);
    }

    #[tokio::test]
    async fn recordings_replay_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let inner: Arc<dyn ModelClient> = Arc::new(ScriptedClient::new(["one", "two"], "x"));
        let rec = RecordingClient::create(inner, &path).unwrap();
        let msgs = [Message::user("hi")];
        let s = Sampling::default();
        rec.complete(&msgs, &s).await.unwrap();
        rec.complete(&msgs, &s).await.unwrap();
        let replay = ReplayClient::from_recording(&path).unwrap();
        assert_eq!(replay.complete(&[], &s).await.unwrap(), "one");
        assert_eq!(replay.complete(&[], &s).await.unwrap(), "two");
        assert!(matches!(replay.complete(&[], &s).await, Err(ClientError::Exhausted)));
    }

    #[tokio::test]
    async fn oracle_client_reads_bids_from_the_prompt() {
        let prompt = format!(
            "# Chat messages\n[user] go\n\n{AXTREE_HEADER}\nRootWebArea \"x\"\n\t[7] button \"Go\"\n\n# Action space\n[9] button \"Go\""
        );
        let c = OracleClient::new(vec![OracleStep::on("button", "Go", "click(\"{bid}\")")]);
        let out = c.complete(&[Message::user(prompt)], &Sampling::default()).await.unwrap();
        assert!(out.contains("click(\"7\")"), "{out}");
        let out = c.complete(&[], &Sampling::default()).await.unwrap();
        assert!(out.contains("noop()"));
    }
}
