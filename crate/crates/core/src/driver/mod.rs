//! Browser sessions over the Chrome DevTools Protocol.
//!
//! A [`Session`] owns one Chromium process (or an attached remote browser),
//! an ordered list of page targets and the index of the focused page. Page
//! state that the protocol reports asynchronously (execution contexts,
//! in-flight requests, load events) is tracked by a background task per page
//! and only consulted from explicit operations.

pub mod cdp;
pub mod input;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::process::Stdio;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};
use tracing::{debug, warn};

use crate::observation::BidString;
use cdp::{CdpConnection, CdpEvent};
pub use input::{InputEvent, InputKind, MouseButton};

/// RGB raster, viewport-sized for screenshots.
pub type RasterImage = image::RgbImage;

pub(crate) const PAGE_LIBRARY: &str = include_str!("page.js");

const BROWSER_CANDIDATES: &[&str] = &[
    "chromium",
    "chromium-browser",
    "google-chrome",
    "google-chrome-stable",
    "chrome",
    "headless_shell",
];

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("browser binary not found: {0}")]
    BinaryNotFound(String),
    #[error("failed to start browser: {0}")]
    Launch(String),
    #[error("could not connect to devtools endpoint {endpoint}: {reason}")]
    Connect { endpoint: String, reason: String },
    #[error("protocol transport failure: {0}")]
    Transport(String),
    #[error("protocol error {code}: {message}")]
    Protocol { code: i64, message: String },
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("navigation to {url} failed: {reason}")]
    Navigation { url: String, reason: String },
    #[error("invalid tab index {index} (session has {count} pages)")]
    InvalidTab { index: usize, count: usize },
    #[error("cannot close the last open tab")]
    LastTab,
    #[error("no {0} page in history")]
    NoHistory(&'static str),
    #[error("unknown bid {0:?}: element absent or page changed since the last marking pass")]
    UnknownBid(String),
    #[error("stale frame for bid {bid:?}: frame {prefix:?} navigated away since marking")]
    StaleFrame { bid: String, prefix: String },
    #[error("frame not found: {0}")]
    FrameNotFound(String),
    #[error("script exception: {0}")]
    Script(String),
    #[error("script result is not JSON-serializable: {0}")]
    Serialization(String),
    #[error("invalid input event: {0}")]
    InvalidInput(String),
    #[error("image decoding failed: {0}")]
    Image(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Default for Viewport {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LaunchOptions {
    /// Explicit browser binary. Falls back to `WEBGYM_BROWSER`, `CHROME_PATH`, then `PATH`.
    pub binary: Option<PathBuf>,
    /// Attach to an already running browser instead of spawning one.
    pub endpoint: Option<String>,
    pub headless: bool,
    pub viewport: Viewport,
    pub user_data_dir: Option<PathBuf>,
    /// Pass `--no-sandbox`; needed when running as root in containers.
    pub no_sandbox: bool,
    pub extra_args: Vec<String>,
    pub connect_timeout_ms: u64,
    pub command_timeout_ms: u64,
    pub navigation_timeout_ms: u64,
    /// Network-idle window required after load before a page counts as settled.
    pub quiet_window_ms: u64,
    /// Pause after an action before checking for quiescence, so navigations
    /// the action triggers have started.
    pub action_grace_ms: u64,
}

impl Default for LaunchOptions {
    fn default() -> Self {
        Self {
            binary: None,
            endpoint: None,
            headless: true,
            viewport: Viewport::default(),
            user_data_dir: None,
            no_sandbox: running_as_root(),
            extra_args: Vec::new(),
            connect_timeout_ms: 30_000,
            command_timeout_ms: 30_000,
            navigation_timeout_ms: 30_000,
            quiet_window_ms: 500,
            action_grace_ms: 100,
        }
    }
}

impl LaunchOptions {
    pub fn headless(mut self, headless: bool) -> Self {
        self.headless = headless;
        self
    }

    pub fn viewport(mut self, width: u32, height: u32) -> Self {
        self.viewport = Viewport { width, height };
        self
    }

    pub fn quiet_window(mut self, ms: u64) -> Self {
        self.quiet_window_ms = ms;
        self
    }
}

fn running_as_root() -> bool {
    std::env::var("USER").map(|u| u == "root").unwrap_or(false)
        || std::env::var("HOME").map(|h| h == "/root").unwrap_or(false)
}

/// Locate a Chromium-family binary from the environment or `PATH`.
pub fn locate_browser() -> Option<PathBuf> {
    for var in ["WEBGYM_BROWSER", "CHROME_PATH"] {
        if let Ok(path) = std::env::var(var) {
            if !path.is_empty() {
                let p = PathBuf::from(&path);
                if p.exists() {
                    return Some(p);
                }
                if let Ok(found) = which::which(&path) {
                    return Some(found);
                }
            }
        }
    }
    BROWSER_CANDIDATES
        .iter()
        .find_map(|name| which::which(name).ok())
}

/// Navigation and tab commands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NavCommand {
    Goto(String),
    GoBack,
    GoForward,
    NewTab,
    TabClose,
    TabFocus(usize),
}

/// Stable identifier of one page target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageHandle {
    pub target_id: String,
}

/// A resolved element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub page: PageHandle,
    /// Protocol frame ids from the main frame down to the element's frame.
    pub frame_path: Vec<String>,
    pub backend_id: i64,
    pub bid: BidString,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchInfo {
    pub out_of_viewport: bool,
}

#[derive(Debug)]
struct PageState {
    contexts: HashMap<String, i64>,
    inflight: HashSet<String>,
    loading_frames: HashSet<String>,
    last_activity: Instant,
    load_count: u64,
    navigations: u64,
    url: String,
    closed: bool,
}

impl PageState {
    fn new() -> Self {
        Self {
            contexts: HashMap::new(),
            inflight: HashSet::new(),
            loading_frames: HashSet::new(),
            last_activity: Instant::now(),
            load_count: 0,
            navigations: 0,
            url: "about:blank".to_string(),
            closed: false,
        }
    }
}

struct Page {
    handle: PageHandle,
    session_id: String,
    state: Arc<Mutex<PageState>>,
    tracker: tokio::task::JoinHandle<()>,
}

impl Drop for Page {
    fn drop(&mut self) {
        self.tracker.abort();
    }
}

#[derive(Default)]
struct TargetEvents {
    created: Vec<String>,
    destroyed: HashSet<String>,
}

/// A live browser session.
pub struct Session {
    conn: Arc<CdpConnection>,
    child: Option<Child>,
    owned_profile: Option<PathBuf>,
    pages: Vec<Page>,
    active: usize,
    focus_history: Vec<String>,
    seen_targets: HashSet<String>,
    targets: Arc<Mutex<TargetEvents>>,
    target_tracker: tokio::task::JoinHandle<()>,
    viewport: Viewport,
    options: LaunchOptions,
    pointer: (f64, f64),
}

impl Drop for Session {
    fn drop(&mut self) {
        self.target_tracker.abort();
        if let Some(child) = self.child.as_mut() {
            let _ = child.start_kill();
        }
        if let Some(dir) = self.owned_profile.take() {
            // The browser may still hold files briefly; removal is best effort.
            let _ = std::fs::remove_dir_all(dir);
        }
    }
}

impl Session {
    /// Spawn a browser (or attach to `options.endpoint`) and return a session
    /// with exactly one blank page.
    pub async fn launch(options: LaunchOptions) -> Result<Self, DriverError> {
        if let Some(endpoint) = options.endpoint.clone() {
            return Self::connect(&endpoint, options).await;
        }
        let binary = match &options.binary {
            Some(p) => {
                if p.exists() {
                    p.clone()
                } else {
                    which::which(p)
                        .map_err(|_| DriverError::BinaryNotFound(p.display().to_string()))?
                }
            }
            None => locate_browser().ok_or_else(|| {
                DriverError::BinaryNotFound(
                    "set WEBGYM_BROWSER or put chromium on PATH".to_string(),
                )
            })?,
        };

        let (profile, owned) = match &options.user_data_dir {
            Some(dir) => (dir.clone(), None),
            None => {
                let dir = std::env::temp_dir().join(format!(
                    "webgym-profile-{}-{}",
                    std::process::id(),
                    unique_suffix()
                ));
                (dir.clone(), Some(dir))
            }
        };
        std::fs::create_dir_all(&profile)
            .map_err(|e| DriverError::Launch(format!("profile dir {}: {e}", profile.display())))?;

        let vp = options.viewport;
        let mut cmd = Command::new(&binary);
        cmd.arg("--remote-debugging-port=0")
            .arg(format!("--user-data-dir={}", profile.display()))
            .arg(format!("--window-size={},{}", vp.width, vp.height))
            .args([
                "--no-first-run",
                "--no-default-browser-check",
                "--disable-gpu",
                "--disable-dev-shm-usage",
                "--disable-background-networking",
                "--disable-background-timer-throttling",
                "--disable-backgrounding-occluded-windows",
                "--disable-renderer-backgrounding",
                "--disable-features=BackForwardCache,Translate,MediaRouter",
                "--hide-scrollbars",
                "--mute-audio",
                "--force-device-scale-factor=1",
            ]);
        if options.headless {
            cmd.arg("--headless=new");
        }
        if options.no_sandbox {
            cmd.arg("--no-sandbox");
        }
        cmd.args(&options.extra_args)
            .arg("about:blank")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .kill_on_drop(true);

        let mut child = cmd
            .spawn()
            .map_err(|e| DriverError::Launch(format!("{}: {e}", binary.display())))?;
        let stderr = child.stderr.take().expect("stderr piped");
        let timeout = Duration::from_millis(options.connect_timeout_ms);
        let mut lines = BufReader::new(stderr).lines();
        let endpoint = tokio::time::timeout(timeout, async {
            while let Ok(Some(line)) = lines.next_line().await {
                if let Some(rest) = line.split("DevTools listening on ").nth(1) {
                    return Some(rest.trim().to_string());
                }
            }
            None
        })
        .await
        .map_err(|_| DriverError::Launch(format!("no devtools endpoint within {timeout:?}")))?
        .ok_or_else(|| DriverError::Launch("browser exited before exposing devtools".into()))?;
        // Keep draining stderr so the browser never blocks on a full pipe.
        tokio::spawn(async move { while let Ok(Some(_)) = lines.next_line().await {} });

        let mut session = Self::connect(&endpoint, options).await?;
        session.child = Some(child);
        session.owned_profile = owned;
        Ok(session)
    }

    /// Attach to a running browser's devtools WebSocket endpoint.
    pub async fn connect(endpoint: &str, options: LaunchOptions) -> Result<Self, DriverError> {
        let conn = CdpConnection::connect(
            endpoint,
            Duration::from_millis(options.connect_timeout_ms),
            Duration::from_millis(options.command_timeout_ms),
        )
        .await?;

        let targets: Arc<Mutex<TargetEvents>> = Arc::default();
        let target_tracker = {
            let mut rx = conn.subscribe();
            let targets = targets.clone();
            tokio::spawn(async move {
                while let Some(ev) = rx.recv().await {
                    if ev.session_id.is_some() {
                        continue;
                    }
                    match ev.method.as_str() {
                        "Target.targetCreated" => {
                            let info = &ev.params["targetInfo"];
                            if info["type"] == "page" {
                                if let Some(id) = info["targetId"].as_str() {
                                    targets.lock().unwrap().created.push(id.to_string());
                                }
                            }
                        }
                        "Target.targetDestroyed" => {
                            if let Some(id) = ev.params["targetId"].as_str() {
                                targets.lock().unwrap().destroyed.insert(id.to_string());
                            }
                        }
                        _ => {}
                    }
                }
            })
        };

        let mut session = Self {
            conn,
            child: None,
            owned_profile: None,
            pages: Vec::new(),
            active: 0,
            focus_history: Vec::new(),
            seen_targets: HashSet::new(),
            targets,
            target_tracker,
            viewport: options.viewport,
            options,
            pointer: (0.0, 0.0),
        };

        session
            .conn
            .send(None, "Target.setDiscoverTargets", json!({ "discover": true }))
            .await?;
        let existing = session
            .conn
            .send(None, "Target.getTargets", json!({}))
            .await?;
        let mut page_ids: Vec<String> = existing["targetInfos"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|t| t["type"] == "page")
            .filter_map(|t| t["targetId"].as_str().map(str::to_string))
            .collect();
        for id in &page_ids {
            session.seen_targets.insert(id.clone());
        }
        let first = if page_ids.is_empty() {
            session.create_target("about:blank").await?
        } else {
            page_ids.remove(0)
        };
        for extra in page_ids {
            let _ = session
                .conn
                .send(None, "Target.closeTarget", json!({ "targetId": extra }))
                .await;
        }
        session.adopt(&first).await?;
        session.active = 0;
        session.focus_history = vec![first];
        if session.active_url().await? != "about:blank" {
            session.goto_active("about:blank").await?;
        }
        session.targets.lock().unwrap().created.clear();
        Ok(session)
    }

    pub fn endpoint(&self) -> &str {
        self.conn.endpoint()
    }

    pub fn viewport(&self) -> Viewport {
        self.viewport
    }

    pub fn options(&self) -> &LaunchOptions {
        &self.options
    }

    pub fn pages(&self) -> Vec<PageHandle> {
        self.pages.iter().map(|p| p.handle.clone()).collect()
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    pub fn active_page(&self) -> PageHandle {
        self.pages[self.active].handle.clone()
    }

    /// URLs of all open pages, in creation order.
    pub fn page_urls(&self) -> Vec<String> {
        self.pages
            .iter()
            .map(|p| p.state.lock().unwrap().url.clone())
            .collect()
    }

    /// Current URL of the active page as reported by the page itself.
    pub async fn active_url(&mut self) -> Result<String, DriverError> {
        let v = self.evaluate_main("location.href", true).await?;
        let url = v.as_str().unwrap_or_default().to_string();
        self.pages[self.active].state.lock().unwrap().url = url.clone();
        Ok(url)
    }

    async fn create_target(&mut self, url: &str) -> Result<String, DriverError> {
        let res = self
            .conn
            .send(None, "Target.createTarget", json!({ "url": url }))
            .await?;
        let id = res["targetId"]
            .as_str()
            .ok_or_else(|| DriverError::Transport("createTarget returned no id".into()))?
            .to_string();
        self.seen_targets.insert(id.clone());
        Ok(id)
    }

    /// Attach to a page target, enable the domains we track, and append it.
    async fn adopt(&mut self, target_id: &str) -> Result<(), DriverError> {
        self.seen_targets.insert(target_id.to_string());
        let res = self
            .conn
            .send(
                None,
                "Target.attachToTarget",
                json!({ "targetId": target_id, "flatten": true }),
            )
            .await?;
        let session_id = res["sessionId"]
            .as_str()
            .ok_or_else(|| DriverError::Transport("attachToTarget returned no session".into()))?
            .to_string();

        let state = Arc::new(Mutex::new(PageState::new()));
        let tracker = spawn_page_tracker(
            self.conn.clone(),
            self.conn.subscribe(),
            session_id.clone(),
            state.clone(),
        );
        let page = Page {
            handle: PageHandle {
                target_id: target_id.to_string(),
            },
            session_id: session_id.clone(),
            state,
            tracker,
        };
        let sid = Some(session_id.as_str());
        for method in ["Page.enable", "Runtime.enable", "Network.enable"] {
            self.conn.send(sid, method, json!({})).await?;
        }
        let vp = self.viewport;
        self.conn
            .send(
                sid,
                "Emulation.setDeviceMetricsOverride",
                json!({
                    "width": vp.width,
                    "height": vp.height,
                    "deviceScaleFactor": 1,
                    "mobile": false,
                }),
            )
            .await?;
        let _ = self
            .conn
            .send(sid, "Runtime.runIfWaitingForDebugger", json!({}))
            .await;
        self.pages.push(page);
        Ok(())
    }

    /// Pick up pages opened or closed by the pages themselves (popups,
    /// `target=_blank`, `window.close()`). A newly opened page becomes active.
    pub async fn sync_pages(&mut self) -> Result<(), DriverError> {
        let (created, destroyed) = {
            let mut t = self.targets.lock().unwrap();
            (std::mem::take(&mut t.created), std::mem::take(&mut t.destroyed))
        };
        if !destroyed.is_empty() {
            let active_id = self.pages[self.active].handle.target_id.clone();
            self.pages
                .retain(|p| !destroyed.contains(&p.handle.target_id));
            self.focus_history.retain(|id| !destroyed.contains(id));
            if self.pages.is_empty() {
                let id = self.create_target("about:blank").await?;
                self.adopt(&id).await?;
                self.focus_history.push(id);
            }
            self.active = self
                .pages
                .iter()
                .position(|p| p.handle.target_id == active_id)
                .or_else(|| {
                    self.focus_history
                        .last()
                        .and_then(|id| self.pages.iter().position(|p| &p.handle.target_id == id))
                })
                .unwrap_or(self.pages.len() - 1);
        }
        let mut adopted = false;
        for id in created {
            if self.seen_targets.contains(&id) || destroyed.contains(&id) {
                continue;
            }
            debug!(target = %id, "adopting page opened by content");
            if self.adopt(&id).await.is_ok() {
                adopted = true;
            }
        }
        if adopted {
            self.active = self.pages.len() - 1;
            let id = self.pages[self.active].handle.target_id.clone();
            self.focus_history.push(id);
            self.settle().await;
        }
        Ok(())
    }

    pub async fn navigate(&mut self, command: NavCommand) -> Result<(), DriverError> {
        match command {
            NavCommand::Goto(url) => self.goto_active(&url).await,
            NavCommand::GoBack => self.history_step(-1).await,
            NavCommand::GoForward => self.history_step(1).await,
            NavCommand::NewTab => {
                let id = self.create_target("about:blank").await?;
                self.adopt(&id).await?;
                self.active = self.pages.len() - 1;
                self.focus_history.push(id);
                self.bring_to_front().await
            }
            NavCommand::TabClose => {
                if self.pages.len() <= 1 {
                    return Err(DriverError::LastTab);
                }
                let page = self.pages.remove(self.active);
                let id = page.handle.target_id.clone();
                drop(page);
                let _ = self
                    .conn
                    .send(None, "Target.closeTarget", json!({ "targetId": id }))
                    .await;
                self.focus_history.retain(|f| f != &id);
                self.active = self
                    .focus_history
                    .last()
                    .and_then(|last| self.pages.iter().position(|p| &p.handle.target_id == last))
                    .unwrap_or(self.pages.len() - 1);
                self.bring_to_front().await
            }
            NavCommand::TabFocus(index) => {
                if index >= self.pages.len() {
                    return Err(DriverError::InvalidTab {
                        index,
                        count: self.pages.len(),
                    });
                }
                self.active = index;
                let id = self.pages[index].handle.target_id.clone();
                self.focus_history.retain(|f| f != &id);
                self.focus_history.push(id);
                self.bring_to_front().await
            }
        }
    }

    async fn bring_to_front(&mut self) -> Result<(), DriverError> {
        let page = &self.pages[self.active];
        let _ = self
            .conn
            .send(
                None,
                "Target.activateTarget",
                json!({ "targetId": page.handle.target_id }),
            )
            .await;
        self.conn
            .send(Some(&page.session_id), "Page.bringToFront", json!({}))
            .await?;
        Ok(())
    }

    async fn goto_active(&mut self, url: &str) -> Result<(), DriverError> {
        let page = &self.pages[self.active];
        let (loads_before, navs_before) = {
            let s = page.state.lock().unwrap();
            (s.load_count, s.navigations)
        };
        let nav_timeout = Duration::from_millis(self.options.navigation_timeout_ms);
        let res = self
            .conn
            .send_with_timeout(
                Some(&page.session_id),
                "Page.navigate",
                json!({ "url": url }),
                nav_timeout,
            )
            .await
            .map_err(|e| match e {
                DriverError::Timeout(_) => DriverError::Navigation {
                    url: url.to_string(),
                    reason: format!("timed out after {nav_timeout:?}"),
                },
                other => other,
            })?;
        if let Some(err) = res["errorText"].as_str().filter(|s| !s.is_empty()) {
            return Err(DriverError::Navigation {
                url: url.to_string(),
                reason: err.to_string(),
            });
        }
        if res.get("loaderId").and_then(Value::as_str).is_some() {
            let state = page.state.clone();
            let ok = wait_until(nav_timeout, || {
                let s = state.lock().unwrap();
                s.load_count > loads_before && s.navigations > navs_before
            })
            .await;
            if !ok {
                return Err(DriverError::Navigation {
                    url: url.to_string(),
                    reason: format!("load event not received within {nav_timeout:?}"),
                });
            }
        }
        self.settle().await;
        Ok(())
    }

    async fn history_step(&mut self, delta: i64) -> Result<(), DriverError> {
        let page = &self.pages[self.active];
        let hist = self
            .conn
            .send(Some(&page.session_id), "Page.getNavigationHistory", json!({}))
            .await?;
        let current = hist["currentIndex"].as_i64().unwrap_or(0);
        let entries = hist["entries"].as_array().cloned().unwrap_or_default();
        let target = current + delta;
        if target < 0 || target as usize >= entries.len() {
            return Err(DriverError::NoHistory(if delta < 0 {
                "previous"
            } else {
                "next"
            }));
        }
        let entry = &entries[target as usize];
        let navs_before = page.state.lock().unwrap().navigations;
        self.conn
            .send(
                Some(&page.session_id),
                "Page.navigateToHistoryEntry",
                json!({ "entryId": entry["id"] }),
            )
            .await?;
        let state = page.state.clone();
        let nav_timeout = Duration::from_millis(self.options.navigation_timeout_ms);
        let target_url = entry["url"].as_str().unwrap_or_default().to_string();
        let committed = wait_until(nav_timeout, || {
            let s = state.lock().unwrap();
            s.navigations > navs_before || s.url == target_url
        })
        .await;
        if !committed {
            return Err(DriverError::Navigation {
                url: target_url,
                reason: "history navigation did not commit".into(),
            });
        }
        self.settle().await;
        Ok(())
    }

    /// Wait until the active page has no loading frames and no in-flight
    /// requests for the quiet window. Gives up silently at the navigation
    /// timeout: pages that never go idle are observed as they are.
    pub async fn settle(&self) {
        let quiet = Duration::from_millis(self.options.quiet_window_ms);
        let deadline = Duration::from_millis(self.options.navigation_timeout_ms);
        let state = self.pages[self.active].state.clone();
        let idle = wait_until(deadline, || {
            let s = state.lock().unwrap();
            s.closed
                || (s.inflight.is_empty()
                    && s.loading_frames.is_empty()
                    && s.last_activity.elapsed() >= quiet)
        })
        .await;
        if !idle {
            warn!("page did not become idle within {deadline:?}");
        }
    }

    /// Settle after an input action: a short grace period, then [`Session::settle`].
    pub async fn settle_after_action(&self) {
        tokio::time::sleep(Duration::from_millis(self.options.action_grace_ms)).await;
        self.settle().await;
    }

    fn active_session_id(&self) -> String {
        self.pages[self.active].session_id.clone()
    }

    fn main_frame_id(&self) -> String {
        self.pages[self.active].handle.target_id.clone()
    }

    async fn evaluate_main(&self, expression: &str, by_value: bool) -> Result<Value, DriverError> {
        let sid = self.active_session_id();
        let res = self
            .conn
            .send(
                Some(&sid),
                "Runtime.evaluate",
                json!({
                    "expression": expression,
                    "returnByValue": by_value,
                    "awaitPromise": true,
                    "userGesture": true,
                }),
            )
            .await?;
        extract_result(res, by_value)
    }

    /// Evaluate a script in a frame of the active page and return its JSON value.
    /// An empty `frame_path` (or one naming only the main frame) targets the main frame.
    pub async fn eval_in_page(
        &mut self,
        frame_path: &[String],
        script: &str,
    ) -> Result<Value, DriverError> {
        let main = self.main_frame_id();
        let frame = frame_path.last().filter(|f| **f != main);
        let Some(frame) = frame else {
            return self.evaluate_main(script, true).await;
        };
        let context = self.pages[self.active]
            .state
            .lock()
            .unwrap()
            .contexts
            .get(frame)
            .copied()
            .ok_or_else(|| DriverError::FrameNotFound(frame.clone()))?;
        let sid = self.active_session_id();
        let res = self
            .conn
            .send(
                Some(&sid),
                "Runtime.evaluate",
                json!({
                    "expression": script,
                    "contextId": context,
                    "returnByValue": true,
                    "awaitPromise": true,
                }),
            )
            .await?;
        extract_result(res, true)
    }

    /// Make sure the page library is installed in the active page's main world.
    pub(crate) async fn ensure_library(&self) -> Result<(), DriverError> {
        let present = self
            .evaluate_main("!!(window.__webgym && window.__webgym.version === 1)", true)
            .await?;
        if present != Value::Bool(true) {
            self.evaluate_main(PAGE_LIBRARY, true).await?;
        }
        Ok(())
    }

    /// Call a page-library function with JSON arguments.
    pub(crate) async fn call_library(&self, function: &str, args: &[Value]) -> Result<Value, DriverError> {
        self.ensure_library().await?;
        let args = args
            .iter()
            .map(Value::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        self.evaluate_main(&format!("window.__webgym.{function}({args})"), true)
            .await
    }

    /// Resolve a bid from the most recent marking pass to a protocol node.
    pub async fn resolve(&mut self, bid: &BidString) -> Result<NodeRef, DriverError> {
        self.ensure_library().await?;
        let check = self
            .call_library("check", &[json!(bid.as_str())])
            .await?;
        if check["ok"] != Value::Bool(true) {
            let err = check["error"].as_str().unwrap_or("unknown-bid");
            return Err(match err.strip_prefix("stale-frame:") {
                Some(prefix) => DriverError::StaleFrame {
                    bid: bid.to_string(),
                    prefix: prefix.to_string(),
                },
                None => DriverError::UnknownBid(bid.to_string()),
            });
        }
        let mut frame_path = vec![self.main_frame_id()];
        let frames: Vec<String> = check["frames"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect();
        for prefix in frames {
            let owner = self
                .evaluate_main(
                    &format!("window.__webgym.frameOwner({})", json!(prefix)),
                    false,
                )
                .await?;
            let node = self.describe_object(&owner).await?;
            let frame_id = node["frameId"]
                .as_str()
                .ok_or_else(|| DriverError::StaleFrame {
                    bid: bid.to_string(),
                    prefix: prefix.clone(),
                })?;
            frame_path.push(frame_id.to_string());
        }
        let element = self
            .evaluate_main(
                &format!("window.__webgym.find({})", json!(bid.as_str())),
                false,
            )
            .await
            .map_err(|_| DriverError::UnknownBid(bid.to_string()))?;
        let node = self.describe_object(&element).await?;
        let backend_id = node["backendNodeId"]
            .as_i64()
            .ok_or_else(|| DriverError::UnknownBid(bid.to_string()))?;
        Ok(NodeRef {
            page: self.active_page(),
            frame_path,
            backend_id,
            bid: bid.clone(),
        })
    }

    async fn describe_object(&self, remote: &Value) -> Result<Value, DriverError> {
        let object_id = remote["objectId"]
            .as_str()
            .ok_or_else(|| DriverError::Serialization("expected a DOM node".into()))?;
        let sid = self.active_session_id();
        let res = self
            .conn
            .send(Some(&sid), "DOM.describeNode", json!({ "objectId": object_id }))
            .await;
        let _ = self
            .conn
            .send(Some(&sid), "Runtime.releaseObject", json!({ "objectId": object_id }))
            .await;
        Ok(res?["node"].clone())
    }

    /// Deliver a trusted input event to the active page.
    pub async fn dispatch(&mut self, event: &InputEvent) -> Result<DispatchInfo, DriverError> {
        let vp = self.viewport;
        let (method, params) = event.to_protocol(self.pointer)?;
        let mut info = DispatchInfo::default();
        if let Some((x, y)) = event.coordinates {
            info.out_of_viewport =
                x < 0.0 || y < 0.0 || x > vp.width as f64 || y > vp.height as f64;
            self.pointer = (x, y);
        }
        let sid = self.active_session_id();
        self.conn.send(Some(&sid), method, params).await?;
        Ok(info)
    }

    /// Insert text into the focused element as if it were composed (IME-style).
    pub async fn insert_text(&mut self, text: &str) -> Result<(), DriverError> {
        let sid = self.active_session_id();
        self.conn
            .send(Some(&sid), "Input.insertText", json!({ "text": text }))
            .await?;
        Ok(())
    }

    /// Number of main-frame navigations the active page has committed.
    pub(crate) fn navigation_count(&self) -> u64 {
        self.pages[self.active].state.lock().unwrap().navigations
    }

    pub fn pointer(&self) -> (f64, f64) {
        self.pointer
    }

    /// Capture the active page's viewport as an RGB image of viewport size.
    pub async fn screenshot(&mut self) -> Result<RasterImage, DriverError> {
        let sid = self.active_session_id();
        let res = self
            .conn
            .send(
                Some(&sid),
                "Page.captureScreenshot",
                json!({ "format": "png", "fromSurface": true, "captureBeyondViewport": false }),
            )
            .await
            .map_err(|e| match e {
                DriverError::Timeout(m) => DriverError::Timeout(format!("screenshot: {m}")),
                other => other,
            })?;
        let data = res["data"]
            .as_str()
            .ok_or_else(|| DriverError::Image("no screenshot data".into()))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| DriverError::Image(e.to_string()))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| DriverError::Image(e.to_string()))?
            .to_rgb8();
        let vp = self.viewport;
        if img.width() == vp.width && img.height() == vp.height {
            return Ok(img);
        }
        Ok(image::imageops::resize(
            &img,
            vp.width,
            vp.height,
            image::imageops::FilterType::Triangle,
        ))
    }

    /// The CDP connection, for protocol calls not wrapped by the session.
    pub(crate) async fn send_active(&self, method: &str, params: Value) -> Result<Value, DriverError> {
        let sid = self.active_session_id();
        self.conn.send(Some(&sid), method, params).await
    }
}

fn extract_result(res: Value, by_value: bool) -> Result<Value, DriverError> {
    if let Some(details) = res.get("exceptionDetails") {
        let message = details["exception"]["description"]
            .as_str()
            .or_else(|| details["exception"]["value"].as_str())
            .or_else(|| details["text"].as_str())
            .unwrap_or("uncaught exception");
        return Err(DriverError::Script(message.to_string()));
    }
    let result = &res["result"];
    if !by_value {
        return Ok(result.clone());
    }
    match result["type"].as_str() {
        Some("undefined") => Ok(Value::Null),
        Some("function") | Some("symbol") | Some("bigint") => Err(DriverError::Serialization(
            result["description"].as_str().unwrap_or("value").to_string(),
        )),
        _ => match result.get("value") {
            Some(v) => Ok(v.clone()),
            None if result["subtype"] == "null" => Ok(Value::Null),
            None => Err(DriverError::Serialization(
                result["description"]
                    .as_str()
                    .unwrap_or("unserializable value")
                    .to_string(),
            )),
        },
    }
}

async fn wait_until(timeout: Duration, mut done: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if done() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

fn unique_suffix() -> String {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    format!("{nanos}-{}", COUNTER.fetch_add(1, Ordering::Relaxed))
}

fn spawn_page_tracker(
    conn: Arc<CdpConnection>,
    mut rx: tokio::sync::mpsc::UnboundedReceiver<CdpEvent>,
    session_id: String,
    state: Arc<Mutex<PageState>>,
) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        while let Some(ev) = rx.recv().await {
            if ev.method == "Target.detachedFromTarget"
                && ev.params["sessionId"].as_str() == Some(session_id.as_str())
            {
                state.lock().unwrap().closed = true;
                break;
            }
            if ev.session_id.as_deref() != Some(session_id.as_str()) {
                continue;
            }
            if ev.method == "Page.javascriptDialogOpening" {
                let conn = conn.clone();
                let sid = session_id.clone();
                tokio::spawn(async move {
                    let _ = conn
                        .send(
                            Some(&sid),
                            "Page.handleJavaScriptDialog",
                            json!({ "accept": true }),
                        )
                        .await;
                });
                continue;
            }
            apply_event(&mut state.lock().unwrap(), &ev);
        }
    })
}

fn apply_event(s: &mut PageState, ev: &CdpEvent) {
    let p = &ev.params;
    let mut activity = true;
    match ev.method.as_str() {
        "Runtime.executionContextCreated" => {
            let ctx = &p["context"];
            if ctx["auxData"]["isDefault"] == Value::Bool(true) {
                if let (Some(frame), Some(id)) =
                    (ctx["auxData"]["frameId"].as_str(), ctx["id"].as_i64())
                {
                    s.contexts.insert(frame.to_string(), id);
                }
            }
            activity = false;
        }
        "Runtime.executionContextDestroyed" => {
            if let Some(id) = p["executionContextId"].as_i64() {
                s.contexts.retain(|_, v| *v != id);
            }
            activity = false;
        }
        "Runtime.executionContextsCleared" => {
            s.contexts.clear();
            activity = false;
        }
        "Network.requestWillBeSent" => {
            if let Some(id) = p["requestId"].as_str() {
                s.inflight.insert(id.to_string());
            }
        }
        "Network.loadingFinished" | "Network.loadingFailed" => {
            if let Some(id) = p["requestId"].as_str() {
                s.inflight.remove(id);
            }
        }
        "Page.frameStartedLoading" => {
            if let Some(id) = p["frameId"].as_str() {
                s.loading_frames.insert(id.to_string());
            }
        }
        "Page.frameStoppedLoading" => {
            if let Some(id) = p["frameId"].as_str() {
                s.loading_frames.remove(id);
            }
        }
        "Page.frameDetached" => {
            if let Some(id) = p["frameId"].as_str() {
                s.loading_frames.remove(id);
                s.contexts.remove(id);
            }
        }
        "Page.loadEventFired" => s.load_count += 1,
        "Page.frameNavigated" => {
            let frame = &p["frame"];
            if frame.get("parentId").map_or(true, Value::is_null) {
                s.navigations += 1;
                if let Some(url) = frame["url"].as_str() {
                    s.url = format!("{url}{}", frame["urlFragment"].as_str().unwrap_or(""));
                }
                // Requests of the previous document will never finish.
                s.inflight.clear();
            }
        }
        "Page.navigatedWithinDocument" => {
            if let Some(url) = p["url"].as_str() {
                s.url = url.to_string();
            }
        }
        _ => activity = false,
    }
    if activity {
        s.last_activity = Instant::now();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_exception_surfaces_message() {
        let res = json!({
            "result": { "type": "object" },
            "exceptionDetails": { "text": "Uncaught", "exception": { "description": "Error: boom\n    at <anonymous>:1:7" } }
        });
        match extract_result(res, true) {
            Err(DriverError::Script(msg)) => assert!(msg.contains("boom")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_json_results_are_rejected() {
        let res = json!({ "result": { "type": "function", "description": "function f() {}" } });
        assert!(matches!(extract_result(res, true), Err(DriverError::Serialization(_))));
        let res = json!({ "result": { "type": "undefined" } });
        assert_eq!(extract_result(res, true).unwrap(), Value::Null);
        let res = json!({ "result": { "type": "number", "value": 2 } });
        assert_eq!(extract_result(res, true).unwrap(), json!(2));
    }

    #[test]
    fn tracker_counts_inflight_requests_and_loads() {
        let mut s = PageState::new();
        let ev = |method: &str, params: Value| CdpEvent {
            session_id: Some("s".into()),
            method: method.into(),
            params,
        };
        apply_event(&mut s, &ev("Network.requestWillBeSent", json!({ "requestId": "1" })));
        apply_event(&mut s, &ev("Page.frameStartedLoading", json!({ "frameId": "F" })));
        assert_eq!(s.inflight.len(), 1);
        apply_event(&mut s, &ev("Network.loadingFinished", json!({ "requestId": "1" })));
        apply_event(&mut s, &ev("Page.loadEventFired", json!({})));
        apply_event(&mut s, &ev("Page.frameStoppedLoading", json!({ "frameId": "F" })));
        assert!(s.inflight.is_empty() && s.loading_frames.is_empty());
        assert_eq!(s.load_count, 1);
        apply_event(
            &mut s,
            &ev("Page.frameNavigated", json!({ "frame": { "id": "F", "url": "http://x/" } })),
        );
        assert_eq!(s.url, "http://x/");
        assert_eq!(s.navigations, 1);
    }

    #[test]
    fn default_launch_options() {
        let o = LaunchOptions::default();
        assert_eq!(o.viewport, Viewport { width: 1280, height: 720 });
        assert_eq!(o.connect_timeout_ms, 30_000);
        assert_eq!(o.quiet_window_ms, 500);
    }
}
