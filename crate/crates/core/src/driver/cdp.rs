//! Minimal Chrome DevTools Protocol transport.
//!
//! One WebSocket per browser. Page targets are attached in flat mode, so every
//! command and event carries an optional `sessionId` that selects the logical
//! channel. A background reader routes responses to their callers and fans
//! events out to subscribers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot};
use tokio_tungstenite::tungstenite::Message;
use tracing::{debug, trace};

use super::DriverError;

type Pending = Arc<Mutex<HashMap<u64, oneshot::Sender<Result<Value, DriverError>>>>>;
type Subscribers = Arc<Mutex<Vec<mpsc::UnboundedSender<CdpEvent>>>>;

/// An unsolicited protocol message.
#[derive(Debug, Clone)]
pub struct CdpEvent {
    pub session_id: Option<String>,
    pub method: String,
    pub params: Value,
}

pub struct CdpConnection {
    endpoint: String,
    outbound: mpsc::UnboundedSender<Message>,
    pending: Pending,
    subscribers: Subscribers,
    next_id: AtomicU64,
    closed: Arc<AtomicBool>,
    command_timeout: Duration,
}

impl CdpConnection {
    pub async fn connect(
        endpoint: &str,
        connect_timeout: Duration,
        command_timeout: Duration,
    ) -> Result<Arc<Self>, DriverError> {
        let mut config = tokio_tungstenite::tungstenite::protocol::WebSocketConfig::default();
        // Screenshots and full DOM dumps routinely exceed the default frame limit.
        config.max_message_size = Some(512 << 20);
        config.max_frame_size = Some(512 << 20);

        let connect = tokio_tungstenite::connect_async_with_config(endpoint, Some(config), false);
        let (stream, _) = tokio::time::timeout(connect_timeout, connect)
            .await
            .map_err(|_| DriverError::Connect {
                endpoint: endpoint.to_string(),
                reason: format!("timed out after {connect_timeout:?}"),
            })?
            .map_err(|e| DriverError::Connect {
                endpoint: endpoint.to_string(),
                reason: e.to_string(),
            })?;

        let (mut sink, mut source) = stream.split();
        let (outbound, mut outbound_rx) = mpsc::unbounded_channel::<Message>();
        let pending: Pending = Arc::default();
        let subscribers: Subscribers = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));

        tokio::spawn(async move {
            while let Some(msg) = outbound_rx.recv().await {
                if let Err(e) = sink.send(msg).await {
                    debug!("cdp write failed: {e}");
                    break;
                }
            }
            let _ = sink.close().await;
        });

        {
            let pending = pending.clone();
            let subscribers = subscribers.clone();
            let closed = closed.clone();
            tokio::spawn(async move {
                while let Some(msg) = source.next().await {
                    let text = match msg {
                        Ok(Message::Text(t)) => t,
                        Ok(Message::Binary(b)) => match String::from_utf8(b) {
                            Ok(t) => t,
                            Err(_) => continue,
                        },
                        Ok(Message::Close(_)) => break,
                        Ok(_) => continue,
                        Err(e) => {
                            debug!("cdp read failed: {e}");
                            break;
                        }
                    };
                    let Ok(value) = serde_json::from_str::<Value>(&text) else {
                        continue;
                    };
                    route(value, &pending, &subscribers);
                }
                closed.store(true, Ordering::SeqCst);
                // Fail every in-flight command instead of letting it hit the timeout.
                let drained: Vec<_> = pending.lock().unwrap().drain().collect();
                for (_, tx) in drained {
                    let _ = tx.send(Err(DriverError::Transport("connection closed".into())));
                }
                subscribers.lock().unwrap().clear();
            });
        }

        Ok(Arc::new(Self {
            endpoint: endpoint.to_string(),
            outbound,
            pending,
            subscribers,
            next_id: AtomicU64::new(1),
            closed,
            command_timeout,
        }))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Receive every event from now on. Dropping the receiver unsubscribes.
    pub fn subscribe(&self) -> mpsc::UnboundedReceiver<CdpEvent> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.subscribers.lock().unwrap().push(tx);
        rx
    }

    pub async fn send(
        &self,
        session_id: Option<&str>,
        method: &str,
        params: Value,
    ) -> Result<Value, DriverError> {
        self.send_with_timeout(session_id, method, params, self.command_timeout)
            .await
    }

    pub async fn send_with_timeout(
        &self,
        session_id: Option<&str>,
        method: &str,
        params: Value,
        timeout: Duration,
    ) -> Result<Value, DriverError> {
        if self.is_closed() {
            return Err(DriverError::Transport("connection closed".into()));
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut msg = json!({ "id": id, "method": method, "params": params });
        if let Some(sid) = session_id {
            msg["sessionId"] = Value::String(sid.to_string());
        }
        let (tx, rx) = oneshot::channel();
        self.pending.lock().unwrap().insert(id, tx);
        trace!(id, method, "cdp send");
        if self.outbound.send(Message::Text(msg.to_string())).is_err() {
            self.pending.lock().unwrap().remove(&id);
            return Err(DriverError::Transport("writer stopped".into()));
        }
        match tokio::time::timeout(timeout, rx).await {
            Ok(Ok(result)) => result,
            Ok(Err(_)) => Err(DriverError::Transport("response channel dropped".into())),
            Err(_) => {
                self.pending.lock().unwrap().remove(&id);
                Err(DriverError::Timeout(format!("{method} after {timeout:?}")))
            }
        }
    }
}

fn route(value: Value, pending: &Pending, subscribers: &Subscribers) {
    if let Some(id) = value.get("id").and_then(Value::as_u64) {
        let Some(tx) = pending.lock().unwrap().remove(&id) else {
            return;
        };
        let result = match value.get("error") {
            Some(err) => Err(DriverError::Protocol {
                code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                message: err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown protocol error")
                    .to_string(),
            }),
            None => Ok(value.get("result").cloned().unwrap_or(Value::Null)),
        };
        let _ = tx.send(result);
        return;
    }
    let Some(method) = value.get("method").and_then(Value::as_str) else {
        return;
    };
    let event = CdpEvent {
        session_id: value
            .get("sessionId")
            .and_then(Value::as_str)
            .map(str::to_string),
        method: method.to_string(),
        params: value.get("params").cloned().unwrap_or(Value::Null),
    };
    let mut subs = subscribers.lock().unwrap();
    subs.retain(|tx| tx.send(event.clone()).is_ok());
}
