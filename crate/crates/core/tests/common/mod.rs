//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod grammar;

use serde_json::Value;
use tokio::sync::{Semaphore, SemaphorePermit};
use webgym_core::driver::{locate_browser, LaunchOptions, NavCommand, Session};
use webgym_core::observation::{self, augment, mark_pages, AxTree, BidIndex, BidString, DomSnapshot};

/// Bounds the number of browsers alive at once across the tests of a binary.
static BROWSER_SLOTS: Semaphore = Semaphore::const_new(4);

pub fn browser_available() -> bool {
    locate_browser().is_some()
}

/// Skip the calling test when no browser is installed.
#[macro_export]
macro_rules! require_browser {
    () => {
        if !common::browser_available() {
            eprintln!("skipped: no Chromium-family browser found");
            return;
        }
    };
}

pub struct Browser {
    pub session: Session,
    _slot: SemaphorePermit<'static>,
}

impl std::ops::Deref for Browser {
    type Target = Session;
    fn deref(&self) -> &Session {
        &self.session
    }
}

impl std::ops::DerefMut for Browser {
    fn deref_mut(&mut self) -> &mut Session {
        &mut self.session
    }
}

pub async fn slot() -> SemaphorePermit<'static> {
    BROWSER_SLOTS.acquire().await.unwrap()
}

/// Reserve `n` browser slots at once, for code that launches its own browsers.
pub async fn slots(n: u32) -> SemaphorePermit<'static> {
    BROWSER_SLOTS.acquire_many(n).await.unwrap()
}

pub async fn browser() -> Browser {
    let slot = slot().await;
    let session = Session::launch(LaunchOptions::default()).await.expect("browser launch");
    Browser { session, _slot: slot }
}

pub async fn goto(session: &mut Session, url: impl Into<String>) {
    session.navigate(NavCommand::Goto(url.into())).await.expect("navigation");
}

pub struct Marked {
    pub index: BidIndex,
    pub dom: DomSnapshot,
    pub ax: AxTree,
}

/// Mark, snapshot and augment the active page.
pub async fn observe(session: &mut Session) -> Marked {
    let index = mark_pages(session).await.expect("marking");
    let (dom, ax) = observation::snapshot(session).await.expect("snapshot");
    let dom = augment(session, dom).await.expect("augment");
    Marked { index, dom, ax }
}

/// Bid of the element carrying the given `id` attribute.
pub fn bid_by_id(dom: &DomSnapshot, id: &str) -> BidString {
    dom.elements()
        .into_iter()
        .find(|e| e.attr("id") == Some(id))
        .and_then(|e| e.bid.clone())
        .unwrap_or_else(|| panic!("no element with id {id:?}"))
}

/// Bid of the first accessibility node with this role and name.
pub fn bid_by_ax(ax: &AxTree, role: &str, name: &str) -> BidString {
    ax.find(role, name)
        .and_then(|n| n.bid.clone())
        .unwrap_or_else(|| panic!("no {role} named {name:?}"))
}

pub async fn eval(session: &mut Session, script: &str) -> Value {
    session.eval_in_page(&[], script).await.expect("script")
}

/// Wait until the store for `id` has at least `n` events (requests from the page are asynchronous).
pub async fn store_events(base_url: &str, id: &str, n: usize) -> Vec<Value> {
    for _ in 0..50 {
        let events = webgym_core::tasks::fetch_store(base_url, id).await.expect("store");
        if events.len() >= n {
            return events;
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    }
    webgym_core::tasks::fetch_store(base_url, id).await.expect("store")
}

/// Fixture pages used for observation invariants.
pub const CORPUS: &[&str] = &[
    "blank", "flat", "nested", "shadow", "counter", "red", "tall", "list", "visibility", "effects/inv", "form/inv",
    "popup", "select",
];

/// Check bid uniqueness, AXTree/DOM bid consistency, visible-flag soundness
/// and re-marking stability on the active page. Returns the violations.
pub async fn invariant_violations(session: &mut Session) -> Vec<String> {
    use std::collections::HashSet;
    let mut out = Vec::new();
    let vp = session.viewport();
    let first = observe(session).await;
    let second = observe(session).await;

    let mut seen = HashSet::new();
    for bid in &first.index.entries {
        if !seen.insert(bid.clone()) {
            out.push(format!("duplicate bid {bid}"));
        }
    }
    let dom_bids: Vec<_> = first.dom.elements().into_iter().filter_map(|e| e.bid.clone()).collect();
    if dom_bids.len() != dom_bids.iter().collect::<HashSet<_>>().len() {
        out.push("duplicate bid in the DOM snapshot".into());
    }
    for bid in first.ax.linked_bids() {
        if !first.dom.augments.contains_key(bid) {
            out.push(format!("AXTree bid {bid} missing from the DOM augments"));
        }
    }
    for aug in first.dom.augments.values() {
        if aug.visible && !aug.bbox.intersects(vp.width as f64, vp.height as f64) {
            out.push(format!("{} visible outside the viewport", aug.bid));
        }
        if aug.visible && (aug.bbox.width() <= 0.0 || aug.bbox.height() <= 0.0) {
            out.push(format!("{} visible with an empty box", aug.bid));
        }
    }
    if first.index.entries != second.index.entries {
        out.push("re-marking changed the bid assignment".into());
    }
    let tags = |m: &Marked| -> Vec<(Option<BidString>, String)> {
        m.dom.elements().into_iter().map(|e| (e.bid.clone(), e.tag.clone())).collect()
    };
    if tags(&first) != tags(&second) {
        out.push("re-marking moved bids between elements".into());
    }
    out
}
