//! Live chat for interactive episodes: a WebSocket stream per episode at
//! `/chat/<episode-id>` and a static panel at `/ui`.
//!
//! Every connection first receives the whole transcript from step 0, then
//! the current episode state, then live updates. Clients send
//! `{"kind": "user_msg", "text": ...}` to talk to the agent.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot, watch};
use tokio::task::JoinHandle;

use super::{run_episode_with, EpisodeRecord};
use crate::agent::Agent;
use crate::chat::{Chat, ChatMessage, ChatRole};
use crate::driver::{NavCommand, Session};
use crate::env::{Env, Task, TaskError, Validation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireKind {
    UserMsg,
    AgentMsg,
    Info,
    State,
}

/// One message on the chat socket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: WireKind,
    pub text: String,
    pub step: u64,
    pub episode: String,
}

impl WireMessage {
    pub fn from_chat(m: &ChatMessage, episode: &str) -> Self {
        let kind = match m.role {
            ChatRole::User => WireKind::UserMsg,
            ChatRole::Agent => WireKind::AgentMsg,
            ChatRole::Info => WireKind::Info,
        };
        Self {
            kind,
            text: m.text.clone(),
            step: m.step,
            episode: episode.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// No goal yet: the first user message becomes the goal.
    Waiting,
    Running,
    Done,
}

/// Episode status, carried as JSON in the text of `state` messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub status: Status,
    pub step: u64,
    pub reward: f64,
}

/// Client-to-server message.
#[derive(Debug, Deserialize)]
struct Incoming {
    kind: WireKind,
    #[serde(default)]
    text: String,
}

/// Chat and status of one interactive episode.
pub struct EpisodeChannel {
    id: String,
    chat: Chat,
    state: watch::Sender<EpisodeState>,
    goal: Mutex<Option<oneshot::Sender<String>>>,
    goal_rx: Mutex<Option<oneshot::Receiver<String>>>,
}

impl EpisodeChannel {
    fn new(id: &str) -> Self {
        let (tx, rx) = oneshot::channel();
        let (state, _) = watch::channel(EpisodeState {
            status: Status::Waiting,
            step: 0,
            reward: 0.0,
        });
        Self {
            id: id.to_string(),
            chat: Chat::new(),
            state,
            goal: Mutex::new(Some(tx)),
            goal_rx: Mutex::new(Some(rx)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The transcript shared with the environment.
    pub fn chat(&self) -> Chat {
        self.chat.clone()
    }

    pub fn state(&self) -> EpisodeState {
        *self.state.borrow()
    }

    pub fn set_state(&self, state: EpisodeState) {
        self.state.send_replace(state);
    }

    pub fn subscribe_state(&self) -> watch::Receiver<EpisodeState> {
        self.state.subscribe()
    }

    /// Deliver a user message: the goal while waiting, a chat message while
    /// running. Rejected when empty or after the episode ended.
    pub fn submit_user(&self, text: &str) -> Result<(), String> {
        let text = text.trim();
        if text.is_empty() {
            return Err("empty messages are ignored".to_string());
        }
        let state = self.state();
        match state.status {
            Status::Done => Err("the episode is over; message not delivered".to_string()),
            Status::Waiting => {
                let delivered = self
                    .goal
                    .lock()
                    .unwrap()
                    .take()
                    .is_some_and(|tx| tx.send(text.to_string()).is_ok());
                if delivered {
                    self.set_state(EpisodeState {
                        status: Status::Running,
                        ..state
                    });
                } else {
                    self.chat.push(ChatRole::User, text, state.step);
                }
                Ok(())
            }
            Status::Running => {
                self.chat.push(ChatRole::User, text, state.step);
                Ok(())
            }
        }
    }

    /// A task whose goal is the first user message of this channel.
    pub fn goal_task(&self, start_url: Option<String>) -> InteractiveTask {
        InteractiveTask {
            start_url,
            goal: self.goal_rx.lock().unwrap().take(),
        }
    }
}

/// Open-ended task driven by a human over the chat. It never validates as
/// done, so the episode runs until the step cap.
pub struct InteractiveTask {
    start_url: Option<String>,
    goal: Option<oneshot::Receiver<String>>,
}

#[async_trait]
impl Task for InteractiveTask {
    fn name(&self) -> &str {
        "interactive"
    }

    fn seed(&self) -> u64 {
        0
    }

    async fn setup(&mut self, session: &mut Session, _chat: &Chat) -> Result<String, TaskError> {
        if let Some(url) = &self.start_url {
            session
                .navigate(NavCommand::Goto(url.clone()))
                .await
                .map_err(|e| TaskError::Setup(format!("cannot open {url}: {e}")))?;
        }
        let rx = self
            .goal
            .take()
            .ok_or_else(|| TaskError::Setup("this episode already received its goal".into()))?;
        rx.await
            .map_err(|_| TaskError::Setup("chat closed before a goal was sent".into()))
    }

    async fn validate(&self, _session: &mut Session, _chat: &Chat) -> Validation {
        Validation::pending()
    }

    async fn teardown(&mut self, _session: &mut Session) -> Result<(), TaskError> {
        Ok(())
    }
}

/// Registry of interactive episodes.
#[derive(Default)]
pub struct ChatHub {
    episodes: Mutex<HashMap<String, Arc<EpisodeChannel>>>,
}

impl ChatHub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// The episode's channel, created on first use.
    pub fn open(&self, id: &str) -> Arc<EpisodeChannel> {
        self.episodes
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(EpisodeChannel::new(id)))
            .clone()
    }

    pub fn router(self: Arc<Self>) -> Router {
        Router::new()
            .route("/chat/:episode", get(chat_socket))
            .route("/ui", get(|| async { Html(PANEL) }))
            .with_state(self)
    }
}

/// Serve the hub on `addr`; returns the bound address.
pub async fn serve_hub(hub: Arc<ChatHub>, addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = hub.router();
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("chat hub stopped: {e}");
        }
    });
    Ok((bound, handle))
}

async fn chat_socket(
    State(hub): State<Arc<ChatHub>>,
    Path(episode): Path<String>,
    ws: WebSocketUpgrade,
) -> impl IntoResponse {
    let channel = hub.open(&episode);
    ws.on_upgrade(move |socket| stream_episode(socket, channel))
}

fn encode(m: &WireMessage) -> WsMessage {
    WsMessage::Text(serde_json::to_string(m).unwrap())
}

fn state_message(channel: &EpisodeChannel, state: EpisodeState) -> WireMessage {
    WireMessage {
        kind: WireKind::State,
        text: serde_json::to_string(&state).unwrap(),
        step: state.step,
        episode: channel.id.clone(),
    }
}

async fn stream_episode(socket: WebSocket, channel: Arc<EpisodeChannel>) {
    let (mut sink, mut stream) = socket.split();
    let (backlog, mut live) = channel.chat.subscribe();
    let mut states = channel.subscribe_state();
    let current = *states.borrow_and_update();

    for m in &backlog {
        if sink.send(encode(&WireMessage::from_chat(m, &channel.id))).await.is_err() {
            return;
        }
    }
    if sink.send(encode(&state_message(&channel, current))).await.is_err() {
        return;
    }

    loop {
        tokio::select! {
            msg = live.recv() => match msg {
                Ok(m) => {
                    if sink.send(encode(&WireMessage::from_chat(&m, &channel.id))).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let note = WireMessage {
                        kind: WireKind::Info,
                        text: format!("{n} messages were dropped; reconnect to resynchronize"),
                        step: channel.state().step,
                        episode: channel.id.clone(),
                    };
                    if sink.send(encode(&note)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            changed = states.changed() => {
                if changed.is_err() {
                    break;
                }
                let s = *states.borrow_and_update();
                if sink.send(encode(&state_message(&channel, s))).await.is_err() {
                    break;
                }
            },
            incoming = stream.next() => {
                let text = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t,
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let result = match serde_json::from_str::<Incoming>(&text) {
                    Ok(Incoming { kind: WireKind::UserMsg, text }) => channel.submit_user(&text),
                    Ok(_) => Err("only user_msg messages are accepted".to_string()),
                    Err(e) => Err(format!("malformed message: {e}")),
                };
                if let Err(reason) = result {
                    let notice = WireMessage {
                        kind: WireKind::Info,
                        text: reason,
                        step: channel.state().step,
                        episode: channel.id.clone(),
                    };
                    if sink.send(encode(&notice)).await.is_err() {
                        break;
                    }
                }
            },
        }
    }
}

/// Run an interactive episode: wait for the goal on the channel, then let
/// the agent act, publishing the status after every step.
pub async fn run_interactive(
    agent: &mut Agent,
    env: &mut Env,
    channel: &EpisodeChannel,
    start_url: Option<String>,
    max_steps: u32,
) -> EpisodeRecord {
    channel.set_state(EpisodeState {
        status: Status::Waiting,
        step: 0,
        reward: 0.0,
    });
    let task = channel.goal_task(start_url);
    let record = run_episode_with(agent, env, Box::new(task), max_steps, |step, reward, done| {
        channel.set_state(EpisodeState {
            status: if done { Status::Done } else { Status::Running },
            step,
            reward,
        });
    })
    .await;
    channel.set_state(EpisodeState {
        status: Status::Done,
        step: record.steps as u64,
        reward: record.reward,
    });
    record
}

const PANEL: &str = r#"<!doctype html>
<html lang="en"><head><meta charset="utf-8"><title>Agent chat</title>
<style>
body{font-family:sans-serif;margin:0;display:flex;flex-direction:column;height:100vh}
header{padding:8px;background:#234;color:#fff}
#banner{display:none;background:#c33;color:#fff;padding:6px}
#log{flex:1;overflow:auto;padding:8px}
.msg{margin:4px 0;padding:6px 10px;border-radius:8px;max-width:70%;white-space:pre-wrap}
.user_msg{background:#def;margin-left:auto}.agent_msg{background:#eee}.info{color:#666;font-style:italic}
form{display:flex;padding:8px;gap:8px}input{flex:1;padding:6px}
</style></head>
<body>
<header>Episode <span id="episode"></span> <span id="status"></span></header>
<div id="banner" role="alert"></div>
<div id="log" aria-live="polite"></div>
<form id="send"><input id="text" aria-label="Message" autocomplete="off"><button>Send</button></form>
<script>
const episode = new URLSearchParams(location.search).get('episode') || 'default';
document.getElementById('episode').textContent = episode;
const log = document.getElementById('log');
const banner = document.getElementById('banner');
let socket = null;
function show(m) {
  if (m.kind === 'state') {
    const s = JSON.parse(m.text);
    document.getElementById('status').textContent = '(' + s.status + ', step ' + s.step + ', reward ' + s.reward + ')';
    return;
  }
  const div = document.createElement('div');
  div.className = 'msg ' + m.kind;
  div.textContent = m.text;
  log.appendChild(div);
  log.scrollTop = log.scrollHeight;
}
function connect() {
  const proto = location.protocol === 'https:' ? 'wss:' : 'ws:';
  socket = new WebSocket(proto + '//' + location.host + '/chat/' + encodeURIComponent(episode));
  socket.onopen = () => { banner.style.display = 'none'; log.innerHTML = ''; };
  socket.onmessage = (e) => show(JSON.parse(e.data));
  socket.onclose = () => {
    banner.textContent = 'Disconnected from the agent. Retrying...';
    banner.style.display = 'block';
    setTimeout(connect, 2000);
  };
}
document.getElementById('send').addEventListener('submit', (e) => {
  e.preventDefault();
  const input = document.getElementById('text');
  const text = input.value.trim();
  if (!text || !socket || socket.readyState !== WebSocket.OPEN) return;
  socket.send(JSON.stringify({kind: 'user_msg', text}));
  input.value = '';
});
connect();
</script>
</body></html>
"#;
