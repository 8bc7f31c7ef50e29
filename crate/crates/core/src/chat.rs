//! The chat channel between the user and the agent.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    User,
    Agent,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    /// Episode step at which the message was posted.
    pub step: u64,
}

/// Shared, append-only transcript. Clones refer to the same transcript, so a
/// live chat panel can inject user messages while the episode runs.
#[derive(Debug, Clone)]
pub struct Chat {
    inner: Arc<Mutex<Vec<ChatMessage>>>,
    feed: broadcast::Sender<ChatMessage>,
}

impl Default for Chat {
    fn default() -> Self {
        Self::new()
    }
}

impl Chat {
    pub fn new() -> Self {
        let (feed, _) = broadcast::channel(1024);
        Self {
            inner: Arc::default(),
            feed,
        }
    }

    pub fn push(&self, role: ChatRole, text: impl Into<String>, step: u64) -> ChatMessage {
        let msg = ChatMessage {
            role,
            text: text.into(),
            step,
        };
        // Publish under the lock so a concurrent subscribe never sees a message twice.
        let mut guard = self.inner.lock().unwrap();
        guard.push(msg.clone());
        let _ = self.feed.send(msg.clone());
        msg
    }

    pub fn clear(&self) {
        self.inner.lock().unwrap().clear();
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.inner.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Text of the most recent agent message, if any.
    pub fn last_agent_message(&self) -> Option<String> {
        self.inner
            .lock()
            .unwrap()
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::Agent)
            .map(|m| m.text.clone())
    }

    /// Current transcript plus a live feed of every later message, taken atomically.
    pub fn subscribe(&self) -> (Vec<ChatMessage>, broadcast::Receiver<ChatMessage>) {
        let guard = self.inner.lock().unwrap();
        let rx = self.feed.subscribe();
        (guard.clone(), rx)
    }
}
