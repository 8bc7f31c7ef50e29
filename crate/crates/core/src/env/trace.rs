//! JSONL episode traces.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::chat::ChatMessage;

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Reset {
        task: String,
        seed: u64,
        goal: String,
        obs_digest: String,
    },
    Step {
        step: u64,
        action: String,
        reward: f64,
        done: bool,
        error: Option<String>,
        chat_delta: Vec<ChatMessage>,
        obs_digest: String,
    },
    /// Prompt and completions of one agent decision.
    Agent {
        step: u64,
        prompt: Vec<(String, String)>,
        completions: Vec<String>,
        action: String,
        thought: Option<String>,
        error: Option<String>,
    },
}

/// Appends trace records to a file; clones share the file.
#[derive(Debug, Clone)]
pub struct TraceWriter {
    path: PathBuf,
    file: Arc<Mutex<File>>,
}

impl TraceWriter {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self {
            path,
            file: Arc::new(Mutex::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Best effort: tracing problems never interrupt an episode.
    pub fn write(&self, record: &TraceRecord) {
        let Ok(line) = serde_json::to_string(record) else {
            return;
        };
        let mut f = self.file.lock().unwrap();
        if let Err(e) = writeln!(f, "{line}") {
            tracing::warn!("trace write to {} failed: {e}", self.path.display());
        }
    }

    pub fn read(path: impl AsRef<Path>) -> std::io::Result<Vec<TraceRecord>> {
        let text = std::fs::read_to_string(path)?;
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect())
    }
}
