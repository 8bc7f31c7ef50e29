mod common;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::json;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use webgym_core::agent::{Agent, AgentConfig, FnClient, Message as PromptMessage, ModelClient, ScriptedClient};
use webgym_core::chat::ChatRole;
use webgym_core::driver::Session;
use webgym_core::env::Env;
use webgym_core::harness::interactive::{
    run_interactive, serve_hub, ChatHub, EpisodeState, Status, WireKind, WireMessage,
};
use webgym_core::tasks::FixtureServer;

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn connect(addr: SocketAddr, episode: &str) -> Socket {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/chat/{episode}")).await.unwrap();
    ws
}

async fn recv(ws: &mut Socket) -> WireMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("message within the timeout")
            .expect("socket open")
            .unwrap();
        if let Message::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Receive until a message satisfies `pred`; returns everything received.
async fn recv_until(ws: &mut Socket, pred: impl Fn(&WireMessage) -> bool) -> Vec<WireMessage> {
    let mut out = Vec::new();
    loop {
        let m = recv(ws).await;
        let stop = pred(&m);
        out.push(m);
        if stop {
            return out;
        }
    }
}

fn state_of(m: &WireMessage) -> Option<EpisodeState> {
    (m.kind == WireKind::State).then(|| serde_json::from_str(&m.text).unwrap())
}

async fn send_user(ws: &mut Socket, text: &str) {
    let frame = json!({ "kind": "user_msg", "text": text }).to_string();
    ws.send(Message::Text(frame)).await.unwrap();
}

async fn hub() -> (Arc<ChatHub>, SocketAddr) {
    let hub = ChatHub::new();
    let (addr, _) = serve_hub(hub.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    (hub, addr)
}

#[tokio::test]
async fn connections_replay_the_transcript_from_step_zero() {
    let (hub, addr) = hub().await;
    let channel = hub.open("ep1");
    let chat = channel.chat();
    chat.push(ChatRole::User, "Find the report.", 0);
    chat.push(ChatRole::Agent, "Looking.", 1);
    chat.push(ChatRole::Info, "Page loaded.", 1);

    let mut ws = connect(addr, "ep1").await;
    let mut got = Vec::new();
    for _ in 0..3 {
        let m = recv(&mut ws).await;
        assert_eq!(m.episode, "ep1");
        got.push((m.kind, m.text, m.step));
    }
    assert_eq!(
        got,
        [
            (WireKind::UserMsg, "Find the report.".to_string(), 0),
            (WireKind::AgentMsg, "Looking.".to_string(), 1),
            (WireKind::Info, "Page loaded.".to_string(), 1),
        ]
    );
    assert_eq!(state_of(&recv(&mut ws).await).unwrap().status, Status::Waiting);

    // Live messages follow the replay.
    chat.push(ChatRole::Agent, "Found it.", 2);
    let m = recv(&mut ws).await;
    assert_eq!((m.kind, m.text.as_str(), m.step), (WireKind::AgentMsg, "Found it.", 2));
}

#[tokio::test]
async fn reconnecting_loses_nothing() {
    let (hub, addr) = hub().await;
    let channel = hub.open("ep2");
    let chat = channel.chat();
    chat.push(ChatRole::User, "goal", 0);

    let mut ws = connect(addr, "ep2").await;
    recv_until(&mut ws, |m| m.kind == WireKind::State).await;
    ws.close(None).await.unwrap();
    drop(ws);

    // Messages posted while nobody is connected.
    for i in 1..=5 {
        chat.push(ChatRole::Agent, format!("update {i}"), i);
    }
    let mut ws = connect(addr, "ep2").await;
    let replay = recv_until(&mut ws, |m| m.kind == WireKind::State).await;
    let texts: Vec<&str> = replay.iter().filter(|m| m.kind != WireKind::State).map(|m| m.text.as_str()).collect();
    assert_eq!(texts, ["goal", "update 1", "update 2", "update 3", "update 4", "update 5"]);
}

#[tokio::test]
async fn invalid_messages_are_answered_with_info() {
    let (hub, addr) = hub().await;
    let channel = hub.open("ep3");
    let mut ws = connect(addr, "ep3").await;
    recv_until(&mut ws, |m| m.kind == WireKind::State).await;

    send_user(&mut ws, "   ").await;
    let m = recv(&mut ws).await;
    assert_eq!(m.kind, WireKind::Info);
    assert!(m.text.contains("empty"), "{}", m.text);

    ws.send(Message::Text(json!({ "kind": "agent_msg", "text": "spoof" }).to_string())).await.unwrap();
    assert_eq!(recv(&mut ws).await.kind, WireKind::Info);
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert_eq!(recv(&mut ws).await.kind, WireKind::Info);

    channel.set_state(EpisodeState {
        status: Status::Done,
        step: 4,
        reward: 0.0,
    });
    assert_eq!(state_of(&recv(&mut ws).await).unwrap().status, Status::Done);
    send_user(&mut ws, "are you there?").await;
    let m = recv(&mut ws).await;
    assert_eq!(m.kind, WireKind::Info);
    assert!(m.text.contains("over"), "{}", m.text);
    assert!(channel.chat().is_empty());
}

#[tokio::test]
async fn the_panel_is_served() {
    let (_hub, addr) = hub().await;
    let resp = reqwest::get(format!("http://{addr}/ui")).await.unwrap();
    assert_eq!(resp.status(), 200);
    let html = resp.text().await.unwrap();
    assert!(html.contains("WebSocket") && html.contains("/chat/"));
    assert!(html.contains("user_msg"));
}

async fn interactive_env(channel_chat: webgym_core::chat::Chat, config: &AgentConfig) -> Env {
    let session = Session::launch(Default::default()).await.unwrap();
    Env::new(session, config.catalog(), config.env_config()).with_chat(channel_chat)
}

#[tokio::test]
async fn the_first_user_message_becomes_the_goal_and_later_ones_reach_the_agent() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (hub, addr) = hub().await;
    let channel = hub.open("live");
    let config = AgentConfig::default();
    let _slot = common::slot().await;
    let mut env = interactive_env(channel.chat(), &config).await;

    // Waits, and acknowledges once the user's follow-up shows up in its prompt.
    let client = FnClient(|messages: &[PromptMessage]| {
        let prompt = &messages[1].content;
        if prompt.contains("[user] Also check the footer.") && !prompt.contains("[assistant] Noted the footer.") {
            "send_msg_to_user(\"Noted the footer.\")".to_string()
        } else {
            "noop()".to_string()
        }
    });
    let mut agent = Agent::new(config, Arc::new(client) as Arc<dyn ModelClient>).unwrap();
    let start = server.base_url() + "/fixture/flat";
    let run_channel = channel.clone();
    let episode = tokio::spawn(async move {
        let record = run_interactive(&mut agent, &mut env, &run_channel, Some(start), 15).await;
        (record, env)
    });

    let mut ws = connect(addr, "live").await;
    recv_until(&mut ws, |m| m.kind == WireKind::State).await;
    send_user(&mut ws, "Inspect the page.").await;
    let goal = recv_until(&mut ws, |m| m.kind == WireKind::UserMsg).await;
    let goal = goal.last().unwrap();
    assert_eq!((goal.text.as_str(), goal.step), ("Inspect the page.", 0));
    assert_eq!(channel.chat().messages()[0].text, "Inspect the page.");

    recv_until(&mut ws, |m| state_of(m).is_some_and(|s| s.step >= 1)).await;
    send_user(&mut ws, "Also check the footer.").await;
    let seen = recv_until(&mut ws, |m| m.kind == WireKind::AgentMsg).await;
    assert_eq!(seen.last().unwrap().text, "Noted the footer.");
    assert!(seen.iter().any(|m| m.kind == WireKind::UserMsg && m.text == "Also check the footer."));

    let done = recv_until(&mut ws, |m| state_of(m).is_some_and(|s| s.status == Status::Done)).await;
    assert_eq!(state_of(done.last().unwrap()).unwrap().step, 15);
    let (record, _env) = episode.await.unwrap();
    assert_eq!((record.steps, record.success), (15, false));

    send_user(&mut ws, "late").await;
    assert_eq!(recv(&mut ws).await.kind, WireKind::Info);
}

/// Run one scripted interactive episode and return what a client saw.
async fn scripted_transcript(base: &str, episode: &str) -> (Vec<(WireKind, String, u64)>, u32, f64) {
    let (hub, addr) = hub().await;
    let channel = hub.open(episode);
    let config = AgentConfig::default();
    let mut env = interactive_env(channel.chat(), &config).await;
    let script = ["noop()", "send_msg_to_user(\"first\")", "noop()", "send_msg_to_user(\"second\")"];
    let mut agent = Agent::new(config, Arc::new(ScriptedClient::new(script, "noop()"))).unwrap();
    let start = format!("{base}/fixture/counter");
    let run_channel = channel.clone();
    let handle = tokio::spawn(async move {
        let record = run_interactive(&mut agent, &mut env, &run_channel, Some(start), 5).await;
        env.close().await;
        record
    });
    let mut ws = connect(addr, episode).await;
    recv_until(&mut ws, |m| m.kind == WireKind::State).await;
    send_user(&mut ws, "Say two things.").await;
    let record = handle.await.unwrap();

    // A fresh connection replays the whole episode.
    let mut ws = connect(addr, episode).await;
    let seen = recv_until(&mut ws, |m| m.kind == WireKind::State).await;
    let transcript = seen.into_iter().map(|m| (m.kind, m.text, m.step)).collect();
    (transcript, record.steps, record.reward)
}

#[tokio::test]
async fn scripted_interactive_episodes_are_reproducible() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let _slot = common::slot().await;
    let a = scripted_transcript(&server.base_url(), "rep").await;
    let b = scripted_transcript(&server.base_url(), "rep").await;
    assert_eq!(a, b);
    let messages: Vec<&str> = a.0.iter().filter(|m| m.0 != WireKind::State).map(|m| m.1.as_str()).collect();
    assert_eq!(messages, ["Say two things.", "first", "second"]);
    assert_eq!((a.1, a.2), (5, 0.0));
}

fn digest(messages: &[(WireKind, String, u64)]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(serde_json::to_vec(messages).unwrap()))
}

#[tokio::test]
async fn panel_and_environment_transcripts_agree_across_a_reconnect() {
    require_browser!();
    let server = FixtureServer::start().await.unwrap();
    let (hub, addr) = hub().await;
    let channel = hub.open("e2e");
    let config = AgentConfig::default();
    let _slot = common::slot().await;
    let mut env = interactive_env(channel.chat(), &config).await;

    // Acknowledges each new user message once it appears in the prompt.
    let acked = std::sync::Mutex::new(1usize);
    let client = FnClient(move |messages: &[PromptMessage]| {
        let users = messages[1].content.lines().filter(|l| l.starts_with("[user] ")).count();
        let mut acked = acked.lock().unwrap();
        if users > *acked {
            *acked = users;
            format!("send_msg_to_user(\"ack {users}\")")
        } else {
            "noop()".to_string()
        }
    });
    let mut agent = Agent::new(config, Arc::new(client) as Arc<dyn ModelClient>).unwrap();
    let start = server.base_url() + "/fixture/flat";
    let run_channel = channel.clone();
    let episode = tokio::spawn(async move {
        let record = run_interactive(&mut agent, &mut env, &run_channel, Some(start), 10).await;
        (record, env)
    });
    let at_step = |n: u64| move |m: &WireMessage| state_of(m).is_some_and(|s| s.step >= n);

    let mut panel = connect(addr, "e2e").await;
    recv_until(&mut panel, |m| m.kind == WireKind::State).await;
    send_user(&mut panel, "Look around the page.").await;
    recv_until(&mut panel, at_step(2)).await;
    send_user(&mut panel, "First remark.").await;
    recv_until(&mut panel, at_step(4)).await;

    // Forced disconnect; another client talks meanwhile.
    drop(panel);
    let mut other = connect(addr, "e2e").await;
    recv_until(&mut other, |m| m.kind == WireKind::State).await;
    send_user(&mut other, "Second remark.").await;
    recv_until(&mut other, |m| m.kind == WireKind::UserMsg && m.text == "Second remark.").await;

    // The panel reconnects, clears its log and rebuilds it from the replay.
    let mut panel = connect(addr, "e2e").await;
    let mut log: Vec<WireMessage> = Vec::new();
    log.extend(recv_until(&mut panel, at_step(6)).await);
    send_user(&mut panel, "Third remark.").await;
    log.extend(recv_until(&mut panel, |m| state_of(m).is_some_and(|s| s.status == Status::Done)).await);
    let (record, env) = episode.await.unwrap();
    assert_eq!(record.steps, 10);

    let panel_view: Vec<(WireKind, String, u64)> = log
        .into_iter()
        .filter(|m| m.kind != WireKind::State)
        .map(|m| (m.kind, m.text, m.step))
        .collect();
    let env_view: Vec<(WireKind, String, u64)> = env
        .chat()
        .messages()
        .iter()
        .map(|m| WireMessage::from_chat(m, "e2e"))
        .map(|m| (m.kind, m.text, m.step))
        .collect();
    assert_eq!(digest(&panel_view), digest(&env_view), "{panel_view:?}\n{env_view:?}");
    let users: Vec<&str> = env_view.iter().filter(|m| m.0 == WireKind::UserMsg).map(|m| m.1.as_str()).collect();
    assert_eq!(users, ["Look around the page.", "First remark.", "Second remark.", "Third remark."]);
    let acks = env_view.iter().filter(|m| m.0 == WireKind::AgentMsg).count();
    assert_eq!(acks, 3);
}
