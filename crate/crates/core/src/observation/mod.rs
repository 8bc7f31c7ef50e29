//! Page observations: bid marking, DOM and accessibility snapshots, augmented
//! attributes, text serializations, token budgets and Set-of-Mark overlays.

mod overlay;
mod render;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::driver::{DriverError, Session};

pub use overlay::{label_rect, som_overlay, LABEL_HEIGHT};
pub use render::quote as quote_text;
pub use render::{
    render_text, truncate_to_budget, CharEstimator, CoordsMode, RenderFlags, Structure,
    TokenEstimator, TRUNCATION_MARKER,
};

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("page navigated while the snapshot was taken (after retry)")]
    Navigated,
    #[error("malformed protocol data: {0}")]
    Malformed(String),
}

/// Element identifier: a frame prefix of letters (one per frame or shadow-root
/// hop) followed by the element's pre-order index within that scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BidString(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid bid {0:?}: expected letters followed by digits")]
pub struct InvalidBid(pub String);

impl BidString {
    pub fn parse(s: &str) -> Result<Self, InvalidBid> {
        let digits = s.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InvalidBid(s.to_string()));
        }
        Ok(Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Letters identifying the frame or shadow scope ("" for the main document).
    pub fn prefix(&self) -> &str {
        let end = self.0.find(|c: char| c.is_ascii_digit()).unwrap_or(0);
        &self.0[..end]
    }

    /// Pre-order position within the scope.
    pub fn index(&self) -> u64 {
        self.0[self.prefix().len()..].parse().unwrap_or(0)
    }
}

impl fmt::Display for BidString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for BidString {
    type Error = InvalidBid;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<BidString> for String {
    fn from(b: BidString) -> Self {
        b.0
    }
}

impl std::str::FromStr for BidString {
    type Err = InvalidBid;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Frame,
    Shadow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeInfo {
    pub prefix: String,
    pub kind: ScopeKind,
    pub owner_bid: Option<BidString>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedScope {
    pub owner_bid: BidString,
    pub reason: String,
}

/// Result of one marking pass over the active page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidIndex {
    pub pass: u64,
    /// Every assigned bid, scope by scope, each scope in pre-order.
    pub entries: Vec<BidString>,
    pub scopes: Vec<ScopeInfo>,
    /// Frames that could not be instrumented (cross-origin, unloaded).
    pub skipped: Vec<SkippedScope>,
}

impl BidIndex {
    /// Prefixes of the frame scopes a bid's element lives under, outermost first.
    /// Shadow hops are not frames and are left out.
    pub fn frame_chain(&self, bid: &BidString) -> Vec<String> {
        let prefix = bid.prefix();
        (1..=prefix.len())
            .map(|i| &prefix[..i])
            .filter(|p| {
                self.scopes
                    .iter()
                    .any(|s| s.prefix == *p && s.kind == ScopeKind::Frame)
            })
            .map(str::to_string)
            .collect()
    }
}

/// Bounding box in main-frame CSS pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            left: left.min(right),
            top: top.min(bottom),
            right: left.max(right),
            bottom: top.max(bottom),
        }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.left + self.right) / 2.0,
            (self.top + self.bottom) / 2.0,
        )
    }

    pub fn intersects(&self, width: f64, height: f64) -> bool {
        self.right > 0.0 && self.left < width && self.bottom > 0.0 && self.top < height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAugment {
    pub bid: BidString,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub visible: bool,
    pub clickable: bool,
}

pub type Augments = BTreeMap<BidString, NodeAugment>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomNode {
    Element(DomElement),
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomElement {
    pub tag: String,
    pub bid: Option<BidString>,
    pub backend_id: i64,
    /// Attributes in document order, `bid` excluded.
    pub attributes: Vec<(String, String)>,
    pub children: Vec<DomNode>,
    /// Content of an open shadow root hosted by this element.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shadow: Option<Vec<DomNode>>,
    /// A closed shadow root that was not traversed.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub closed_shadow: bool,
    /// Document of an iframe/frame element.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame: Option<FrameContent>,
}

impl DomElement {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Whitespace-collapsed text of the direct text children.
    pub fn own_text(&self) -> String {
        let mut out = String::new();
        for child in &self.children {
            if let DomNode::Text { text } = child {
                out.push(' ');
                out.push_str(text);
            }
        }
        collapse_whitespace(&out)
    }

    /// Child elements across all boundaries in rendering order: shadow
    /// content, light children, then the framed document.
    pub fn element_children(&self) -> impl Iterator<Item = &DomElement> {
        self.shadow
            .iter()
            .flatten()
            .chain(self.children.iter())
            .chain(self.frame.iter().flat_map(|f| f.children.iter()))
            .filter_map(|n| match n {
                DomNode::Element(e) => Some(e),
                DomNode::Text { .. } => None,
            })
    }

    /// Pre-order traversal over this element and all descendants.
    pub fn walk(&self) -> Vec<&DomElement> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(el) = stack.pop() {
            out.push(el);
            let kids: Vec<_> = el.element_children().collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameContent {
    pub frame_id: Option<String>,
    pub children: Vec<DomNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomSnapshot {
    pub pass: u64,
    pub root: DomElement,
    pub augments: Augments,
}

impl DomSnapshot {
    pub fn elements(&self) -> Vec<&DomElement> {
        self.root.walk()
    }

    pub fn find(&self, bid: &BidString) -> Option<&DomElement> {
        self.elements()
            .into_iter()
            .find(|e| e.bid.as_ref() == Some(bid))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxNode {
    pub role: String,
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<String>,
    /// Selected accessibility properties as `(name, value)` pairs.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub states: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bid: Option<BidString>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<AxNode>,
    /// Protocol id of the DOM counterpart, when there is one.
    #[serde(skip)]
    pub backend_id: Option<i64>,
}

impl AxNode {
    pub fn walk(&self) -> Vec<&AxNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn state(&self, name: &str) -> Option<&str> {
        self.states
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxTree {
    pub pass: u64,
    pub root: AxNode,
}

impl AxTree {
    pub fn nodes(&self) -> Vec<&AxNode> {
        self.root.walk()
    }

    /// First node (pre-order) with the given role and name.
    pub fn find(&self, role: &str, name: &str) -> Option<&AxNode> {
        self.nodes()
            .into_iter()
            .find(|n| n.role == role && n.name == name)
    }

    pub fn linked_bids(&self) -> Vec<&BidString> {
        self.nodes().into_iter().filter_map(|n| n.bid.as_ref()).collect()
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Assign bids to every element of every reachable frame and open shadow root
/// of the active page.
pub async fn mark_pages(session: &mut Session) -> Result<BidIndex, ObservationError> {
    session.settle().await;
    let raw = session.call_library("mark", &[]).await?;
    serde_json::from_value(raw).map_err(|e| ObservationError::Malformed(e.to_string()))
}

/// Take DOM and accessibility snapshots of the active page. Both refer to the
/// same marking pass, which this call performs. If the page navigates or
/// mutates in between, the pass is repeated once.
pub async fn snapshot(session: &mut Session) -> Result<(DomSnapshot, AxTree), ObservationError> {
    let mut last_err = ObservationError::Navigated;
    for _ in 0..2 {
        let navs = session.navigation_count();
        let index = mark_pages(session).await?;
        match capture(session, &index).await {
            Ok(pair) if session.navigation_count() == navs => return Ok(pair),
            Ok(_) => last_err = ObservationError::Navigated,
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

async fn capture(
    session: &mut Session,
    index: &BidIndex,
) -> Result<(DomSnapshot, AxTree), ObservationError> {
    let doc = session
        .send_active("DOM.getDocument", json!({ "depth": -1, "pierce": true }))
        .await?;
    let root = doc["root"]
        .as_object()
        .ok_or_else(|| ObservationError::Malformed("DOM.getDocument without root".into()))?;
    let html = root
        .get("children")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .find(|n| n["nodeType"] == 1)
        .ok_or_else(|| ObservationError::Malformed("document has no root element".into()))?;

    let mut frame_owners = HashMap::new();
    let mut bids = HashMap::new();
    let dom_root = convert_dom(html, &mut frame_owners, &mut bids)
        .ok_or_else(|| ObservationError::Malformed("root is not an element".into()))?;

    // A marked page has a bid on every element outside closed shadow roots.
    // Missing bids mean the DOM changed after marking.
    let skipped: Vec<&BidString> = index.skipped.iter().map(|s| &s.owner_bid).collect();
    if has_unmarked(&dom_root, &skipped) {
        return Err(ObservationError::Navigated);
    }

    let ax_root = fetch_ax(session, None, &frame_owners, &bids, 0).await?;
    let ax_root = ax_root.unwrap_or_else(|| AxNode {
        role: "RootWebArea".into(),
        name: String::new(),
        value: None,
        states: Vec::new(),
        bid: None,
        children: Vec::new(),
        backend_id: None,
    });

    let dom = DomSnapshot {
        pass: index.pass,
        root: dom_root,
        augments: Augments::new(),
    };
    let ax = AxTree {
        pass: index.pass,
        root: ax_root,
    };
    Ok((dom, ax))
}

/// True if an element outside the skipped frames carries no bid.
fn has_unmarked(el: &DomElement, skipped: &[&BidString]) -> bool {
    if el.bid.is_none() {
        return true;
    }
    let exempt = el.bid.as_ref().is_some_and(|b| skipped.contains(&b));
    let inner = el.shadow.iter().flatten().chain(el.children.iter());
    let framed = el
        .frame
        .iter()
        .filter(|_| !exempt)
        .flat_map(|f| f.children.iter());
    inner.chain(framed).any(|n| match n {
        DomNode::Element(child) => has_unmarked(child, skipped),
        DomNode::Text { .. } => false,
    })
}

fn convert_dom(
    node: &Value,
    frame_owners: &mut HashMap<i64, String>,
    bids: &mut HashMap<i64, BidString>,
) -> Option<DomElement> {
    if node["nodeType"] != 1 {
        return None;
    }
    let backend_id = node["backendNodeId"].as_i64().unwrap_or(-1);
    let mut attributes = Vec::new();
    let mut bid = None;
    if let Some(flat) = node["attributes"].as_array() {
        for pair in flat.chunks(2) {
            let name = pair[0].as_str().unwrap_or_default().to_string();
            let value = pair
                .get(1)
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            if name == "bid" {
                bid = BidString::parse(&value).ok();
            } else {
                attributes.push((name, value));
            }
        }
    }
    if let Some(b) = &bid {
        bids.insert(backend_id, b.clone());
    }
    let children = convert_children(node["children"].as_array(), frame_owners, bids);

    let mut shadow = None;
    let mut closed_shadow = false;
    for root in node["shadowRoots"].as_array().into_iter().flatten() {
        match root["shadowRootType"].as_str() {
            Some("open") => {
                shadow = Some(convert_children(root["children"].as_array(), frame_owners, bids))
            }
            Some("closed") => closed_shadow = true,
            _ => {}
        }
    }

    let frame = node.get("contentDocument").map(|doc| {
        let frame_id = node["frameId"]
            .as_str()
            .or_else(|| doc["frameId"].as_str())
            .map(str::to_string);
        if let Some(id) = &frame_id {
            frame_owners.insert(backend_id, id.clone());
        }
        FrameContent {
            frame_id,
            children: convert_children(doc["children"].as_array(), frame_owners, bids),
        }
    });
    if frame.is_none() {
        if let Some(id) = node["frameId"].as_str() {
            frame_owners.insert(backend_id, id.to_string());
        }
    }

    Some(DomElement {
        tag: node["localName"]
            .as_str()
            .or_else(|| node["nodeName"].as_str())
            .unwrap_or_default()
            .to_ascii_lowercase(),
        bid,
        backend_id,
        attributes,
        children,
        shadow,
        closed_shadow,
        frame,
    })
}

fn convert_children(
    nodes: Option<&Vec<Value>>,
    frame_owners: &mut HashMap<i64, String>,
    bids: &mut HashMap<i64, BidString>,
) -> Vec<DomNode> {
    let mut out = Vec::new();
    for child in nodes.into_iter().flatten() {
        match child["nodeType"].as_i64() {
            Some(1) => {
                if let Some(el) = convert_dom(child, frame_owners, bids) {
                    out.push(DomNode::Element(el));
                }
            }
            Some(3) => {
                let text = child["nodeValue"].as_str().unwrap_or_default();
                if !text.trim().is_empty() {
                    out.push(DomNode::Text {
                        text: text.to_string(),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

const AX_STATES: &[&str] = &[
    "focused",
    "checked",
    "pressed",
    "expanded",
    "selected",
    "disabled",
    "required",
    "readonly",
    "level",
    "multiselectable",
    "invalid",
    "valuemin",
    "valuemax",
    "autocomplete",
    "haspopup",
    "modal",
    "url",
];

/// Fetch the accessibility tree of one frame and splice in child frames.
fn fetch_ax<'a>(
    session: &'a mut Session,
    frame_id: Option<&'a str>,
    frame_owners: &'a HashMap<i64, String>,
    bids: &'a HashMap<i64, BidString>,
    depth: usize,
) -> futures::future::BoxFuture<'a, Result<Option<AxNode>, ObservationError>> {
    Box::pin(async move {
        let params = match frame_id {
            Some(id) => json!({ "frameId": id }),
            None => json!({}),
        };
        let res = session
            .send_active("Accessibility.getFullAXTree", params)
            .await;
        let res = match res {
            Ok(v) => v,
            // Frames detached between the DOM and AX queries have no tree.
            Err(DriverError::Protocol { .. }) if frame_id.is_some() => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let nodes = res["nodes"].as_array().cloned().unwrap_or_default();
        let by_id: HashMap<&str, &Value> = nodes
            .iter()
            .filter_map(|n| n["nodeId"].as_str().map(|id| (id, n)))
            .collect();
        let Some(root) = nodes.iter().find(|n| {
            n.get("parentId").map_or(true, Value::is_null)
        }) else {
            return Ok(None);
        };
        let mut out = build_ax(root, &by_id, bids);
        if depth < 16 {
            attach_frames(&mut out, session, frame_owners, bids, depth).await?;
        }
        Ok(out.into_iter().next())
    })
}

fn attach_frames<'a>(
    nodes: &'a mut Vec<AxNode>,
    session: &'a mut Session,
    frame_owners: &'a HashMap<i64, String>,
    bids: &'a HashMap<i64, BidString>,
    depth: usize,
) -> futures::future::BoxFuture<'a, Result<(), ObservationError>> {
    Box::pin(async move {
        for node in nodes.iter_mut() {
            if node.role == "Iframe" && node.children.is_empty() {
                let owner = node.backend_id.and_then(|id| frame_owners.get(&id));
                if let Some(frame) = owner.cloned() {
                    if let Some(sub) =
                        fetch_ax(session, Some(&frame), frame_owners, bids, depth + 1).await?
                    {
                        node.children.push(sub);
                    }
                }
            } else {
                attach_frames(&mut node.children, session, frame_owners, bids, depth).await?;
            }
        }
        Ok(())
    })
}

/// Convert one protocol AX node; ignored and inline-text nodes dissolve
/// into their children.
fn build_ax(
    node: &Value,
    by_id: &HashMap<&str, &Value>,
    bids: &HashMap<i64, BidString>,
) -> Vec<AxNode> {
    let mut children = Vec::new();
    for id in node["childIds"].as_array().into_iter().flatten() {
        if let Some(child) = id.as_str().and_then(|id| by_id.get(id)) {
            children.extend(build_ax(child, by_id, bids));
        }
    }
    let role = node["role"]["value"].as_str().unwrap_or_default().to_string();
    if node["ignored"] == Value::Bool(true) || role == "InlineTextBox" || role.is_empty() {
        return children;
    }
    let name = collapse_whitespace(node["name"]["value"].as_str().unwrap_or_default());
    let value = match &node["value"]["value"] {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    };
    let mut states = Vec::new();
    for prop in node["properties"].as_array().into_iter().flatten() {
        let Some(pname) = prop["name"].as_str() else {
            continue;
        };
        if !AX_STATES.contains(&pname) {
            continue;
        }
        let v = match &prop["value"]["value"] {
            Value::String(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Number(n) => n.to_string(),
            _ => continue,
        };
        states.push((pname.to_string(), v));
    }
    let backend_id = node["backendDOMNodeId"].as_i64();
    let bid = backend_id.and_then(|id| bids.get(&id)).cloned();
    vec![AxNode {
        role,
        name,
        value,
        states,
        bid,
        children,
        backend_id,
    }]
}

/// Compute augmented attributes for every element of the current marking pass.
pub async fn compute_augments(session: &mut Session) -> Result<Augments, ObservationError> {
    let vp = session.viewport();
    let raw = session
        .call_library("augment", &[json!(vp.width), json!(vp.height)])
        .await?;
    #[derive(Deserialize)]
    struct Raw {
        bid: String,
        bbox: [f64; 4],
        visible: bool,
        clickable: bool,
    }
    let map: HashMap<String, Raw> =
        serde_json::from_value(raw).map_err(|e| ObservationError::Malformed(e.to_string()))?;
    let mut out = Augments::new();
    for raw in map.into_values() {
        let Ok(bid) = BidString::parse(&raw.bid) else {
            continue;
        };
        let [l, t, r, b] = raw.bbox;
        let bbox = BBox::new(l, t, r, b);
        let visible = raw.visible
            && bbox.width() > 0.0
            && bbox.height() > 0.0
            && bbox.intersects(vp.width as f64, vp.height as f64);
        out.insert(
            bid.clone(),
            NodeAugment {
                bid,
                bbox,
                visible,
                clickable: raw.clickable,
            },
        );
    }
    Ok(out)
}

/// Attach augmented attributes to a snapshot, keeping only bids the snapshot holds.
pub async fn augment(
    session: &mut Session,
    mut snapshot: DomSnapshot,
) -> Result<DomSnapshot, ObservationError> {
    let all = compute_augments(session).await?;
    let present: std::collections::HashSet<BidString> = snapshot
        .elements()
        .into_iter()
        .filter_map(|e| e.bid.clone())
        .collect();
    snapshot.augments = all
        .into_iter()
        .filter(|(bid, _)| present.contains(bid))
        .collect();
    Ok(snapshot)
}

/// Bid of the element that has keyboard focus, descending into frames and shadow roots.
pub async fn focused_bid(session: &mut Session) -> Result<Option<BidString>, ObservationError> {
    let v = session.call_library("focusedBid", &[]).await?;
    Ok(v.as_str().and_then(|s| BidString::parse(s).ok()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bid_grammar() {
        for ok in ["0", "12", "a0", "aa3", "aB7", "Zz100"] {
            assert!(BidString::parse(ok).is_ok(), "{ok}");
        }
        for bad in ["", "a", "1a", "a-1", " 1", "a1b2"] {
            assert!(BidString::parse(bad).is_err(), "{bad}");
        }
        let b = BidString::parse("aB7").unwrap();
        assert_eq!(b.prefix(), "aB");
        assert_eq!(b.index(), 7);
        assert_eq!(BidString::parse("12").unwrap().prefix(), "");
    }

    #[test]
    fn bid_serde_validates() {
        let b: BidString = serde_json::from_str("\"a3\"").unwrap();
        assert_eq!(b.as_str(), "a3");
        assert!(serde_json::from_str::<BidString>("\"x\"").is_err());
    }

    #[test]
    fn bbox_normalizes_orientation() {
        let b = BBox::new(30.0, 20.0, 10.0, 10.0);
        assert!(b.left <= b.right && b.top <= b.bottom);
        assert_eq!(b.center(), (20.0, 15.0));
    }

    #[test]
    fn frame_chain_skips_shadow_hops() {
        let idx = BidIndex {
            pass: 1,
            entries: vec![],
            scopes: vec![
                ScopeInfo { prefix: "".into(), kind: ScopeKind::Frame, owner_bid: None },
                ScopeInfo { prefix: "a".into(), kind: ScopeKind::Frame, owner_bid: None },
                ScopeInfo { prefix: "ab".into(), kind: ScopeKind::Shadow, owner_bid: None },
                ScopeInfo { prefix: "abc".into(), kind: ScopeKind::Frame, owner_bid: None },
            ],
            skipped: vec![],
        };
        let bid = BidString::parse("abc4").unwrap();
        assert_eq!(idx.frame_chain(&bid), vec!["a".to_string(), "abc".to_string()]);
    }

    #[test]
    fn ax_conversion_drops_ignored_and_links_bids() {
        let nodes = json!([
            { "nodeId": "1", "role": { "value": "RootWebArea" }, "name": { "value": "T" }, "childIds": ["2"] },
            { "nodeId": "2", "parentId": "1", "ignored": true, "role": { "value": "generic" }, "childIds": ["3"] },
            { "nodeId": "3", "parentId": "2", "role": { "value": "button" }, "name": { "value": "Submit" },
              "backendDOMNodeId": 9, "childIds": ["4"],
              "properties": [{ "name": "focusable", "value": { "value": true } }, { "name": "disabled", "value": { "value": false } }] },
            { "nodeId": "4", "parentId": "3", "role": { "value": "InlineTextBox" }, "name": { "value": "Submit" } }
        ]);
        let arr = nodes.as_array().unwrap();
        let by_id: HashMap<&str, &Value> =
            arr.iter().map(|n| (n["nodeId"].as_str().unwrap(), n)).collect();
        let mut bids = HashMap::new();
        bids.insert(9, BidString::parse("5").unwrap());
        let root = build_ax(&arr[0], &by_id, &bids).remove(0);
        assert_eq!(root.children.len(), 1);
        let button = &root.children[0];
        assert_eq!(button.role, "button");
        assert_eq!(button.bid.as_ref().unwrap().as_str(), "5");
        assert!(button.children.is_empty());
        assert_eq!(button.states, vec![("disabled".to_string(), "false".to_string())]);
    }
}
