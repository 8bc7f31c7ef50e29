//! Text serializations of DOM and accessibility snapshots, and token budgets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Augments, AxNode, AxTree, DomElement, DomSnapshot, NodeAugment};

/// Marker line appended when text was cut to fit a budget.
pub const TRUNCATION_MARKER: &str = "... (truncated)";

const PRUNED_TAGS: &[&str] = &["script", "style"];

/// Controls and embedded content are meaningful even without attributes or text.
const NEVER_EMPTY: &[&str] = &[
    "input", "textarea", "select", "button", "img", "iframe", "frame", "canvas", "video",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordsMode {
    #[default]
    None,
    Center,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderFlags {
    pub coords_mode: CoordsMode,
    pub show_visible_tag: bool,
    pub show_clickable_tag: bool,
    pub visible_only: bool,
}

/// What to serialize.
#[derive(Debug, Clone, Copy)]
pub enum Structure<'a> {
    Dom(&'a DomSnapshot),
    Ax {
        tree: &'a AxTree,
        augments: &'a Augments,
    },
}

/// Serialize a snapshot as one line per node, indented with one tab per level.
pub fn render_text(structure: Structure<'_>, flags: &RenderFlags) -> String {
    let mut out = String::new();
    match structure {
        Structure::Dom(snap) => {
            if let Some(node) = prune_dom(&snap.root, &snap.augments, flags) {
                write_dom(&node, 0, &snap.augments, flags, &mut out);
            }
        }
        Structure::Ax { tree, augments } => {
            let mut lines = Vec::new();
            ax_lines(&tree.root, None, true, 0, augments, flags, &mut lines);
            for (depth, line) in lines {
                push_line(&mut out, depth, &line);
            }
        }
    }
    out
}

fn push_line(out: &mut String, depth: usize, line: &str) {
    if !out.is_empty() {
        out.push('\n');
    }
    for _ in 0..depth {
        out.push('\t');
    }
    out.push_str(line);
}

/// Double-quote text as the renderers do: escaped quotes and backslashes,
/// line breaks and tabs turned into spaces.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' | '\t' => out.push(' '),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Integers print without decimals, everything else with one.
pub(crate) fn fmt_num(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    if r.fract() == 0.0 {
        format!("{}", r as i64)
    } else {
        format!("{r:.1}")
    }
}

fn suffix(aug: Option<&NodeAugment>, flags: &RenderFlags) -> String {
    let Some(aug) = aug else {
        return String::new();
    };
    let mut s = String::new();
    if flags.show_visible_tag && aug.visible {
        s.push_str("(visible)");
    }
    if flags.show_clickable_tag && aug.clickable {
        s.push_str("(clickable)");
    }
    let b = aug.bbox;
    let coords = match flags.coords_mode {
        CoordsMode::None => None,
        CoordsMode::Center => {
            let (x, y) = b.center();
            Some(format!("center=({},{})", fmt_num(x), fmt_num(y)))
        }
        CoordsMode::Box => Some(format!(
            "box=({},{},{},{})",
            fmt_num(b.left),
            fmt_num(b.top),
            fmt_num(b.right),
            fmt_num(b.bottom)
        )),
    };
    if let Some(c) = coords {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(&c);
    }
    if s.is_empty() {
        s
    } else {
        format!(" {s}")
    }
}

/// A DOM element that survived pruning, with its retained children.
struct Kept<'a> {
    el: &'a DomElement,
    text: String,
    children: Vec<Kept<'a>>,
}

fn prune_dom<'a>(el: &'a DomElement, augments: &Augments, flags: &RenderFlags) -> Option<Kept<'a>> {
    if PRUNED_TAGS.contains(&el.tag.as_str()) {
        return None;
    }
    let children: Vec<Kept<'a>> = el
        .element_children()
        .filter_map(|c| prune_dom(c, augments, flags))
        .collect();
    let text = el.own_text();
    let empty = el.attributes.is_empty() && text.is_empty() && children.is_empty();
    if empty && !NEVER_EMPTY.contains(&el.tag.as_str()) {
        return None;
    }
    if flags.visible_only && children.is_empty() {
        let visible = el
            .bid
            .as_ref()
            .and_then(|b| augments.get(b))
            .is_some_and(|a| a.visible);
        if !visible {
            return None;
        }
    }
    Some(Kept { el, text, children })
}

fn write_dom(node: &Kept<'_>, depth: usize, augments: &Augments, flags: &RenderFlags, out: &mut String) {
    let el = node.el;
    let mut line = String::new();
    if let Some(bid) = &el.bid {
        let _ = write!(line, "[{bid}] ");
    }
    line.push_str(&el.tag);
    line.push(' ');
    line.push_str(&quote(&node.text));
    for (k, v) in &el.attributes {
        if k != "style" {
            let _ = write!(line, " {k}={}", quote(v));
        }
    }
    line.push_str(&suffix(el.bid.as_ref().and_then(|b| augments.get(b)), flags));
    push_line(out, depth, &line);
    for child in &node.children {
        write_dom(child, depth + 1, augments, flags, out);
    }
}

/// States shown even when false, because the false value carries meaning.
const MEANINGFUL_FALSE: &[&str] = &["checked", "pressed", "expanded", "selected"];

fn ax_lines(
    node: &AxNode,
    parent_name: Option<&str>,
    inherited_visible: bool,
    depth: usize,
    augments: &Augments,
    flags: &RenderFlags,
    out: &mut Vec<(usize, String)>,
) -> bool {
    let aug = node.bid.as_ref().and_then(|b| augments.get(b));
    let visible = aug.map_or(inherited_visible, |a| a.visible);
    let clickable = aug.is_some_and(|a| a.clickable);

    let redundant_text = node.role == "StaticText" && parent_name == Some(node.name.as_str());
    let bare_container = matches!(node.role.as_str(), "generic" | "none")
        && node.name.is_empty()
        && node.value.is_none()
        && node.states.is_empty()
        && !clickable;
    let printed = !redundant_text && !bare_container;

    let mark = out.len();
    if printed {
        out.push((depth, ax_line(node, aug, flags)));
    }
    let child_depth = if printed { depth + 1 } else { depth };
    let mut any_child = false;
    for child in &node.children {
        any_child |= ax_lines(
            child,
            Some(node.name.as_str()),
            visible,
            child_depth,
            augments,
            flags,
            out,
        );
    }
    if flags.visible_only && !visible && !any_child {
        out.truncate(mark);
        return false;
    }
    (printed && (visible || !flags.visible_only)) || any_child
}

fn ax_line(node: &AxNode, aug: Option<&NodeAugment>, flags: &RenderFlags) -> String {
    let mut line = String::new();
    if let Some(bid) = &node.bid {
        let _ = write!(line, "[{bid}] ");
    }
    line.push_str(&node.role);
    line.push(' ');
    line.push_str(&quote(&node.name));
    if let Some(v) = node.value.as_deref().filter(|v| !v.is_empty() && *v != node.name) {
        let _ = write!(line, " value={}", quote(v));
    }
    for (k, v) in &node.states {
        match v.as_str() {
            "true" => {
                let _ = write!(line, " {k}");
            }
            "false" if !MEANINGFUL_FALSE.contains(&k.as_str()) => {}
            "" => {}
            _ => {
                let _ = write!(line, " {k}={}", if k == "url" { quote(v) } else { v.clone() });
            }
        }
    }
    line.push_str(&suffix(aug, flags));
    line
}

/// Token count estimate for budgeting prompts.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// Default estimator: one token per four characters, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharEstimator;

impl TokenEstimator for CharEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

impl<F: Fn(&str) -> usize + Send + Sync> TokenEstimator for F {
    fn estimate(&self, text: &str) -> usize {
        self(text)
    }
}

/// Cut `text` to at most `budget` estimated tokens, keeping whole lines and
/// appending [`TRUNCATION_MARKER`] on its own line when anything was dropped.
/// Assumes the estimator is monotone under appending text.
pub fn truncate_to_budget(text: &str, budget: usize, estimator: &dyn TokenEstimator) -> String {
    if estimator.estimate(text) <= budget {
        return text.to_string();
    }
    // Byte offsets of every line end; prefix k keeps the first k lines.
    let ends: Vec<usize> = text.match_indices('\n').map(|(i, _)| i).collect();
    let candidate = |k: usize| -> String {
        if k == 0 {
            TRUNCATION_MARKER.to_string()
        } else {
            format!("{}\n{TRUNCATION_MARKER}", &text[..ends[k - 1]])
        }
    };
    // Largest k in [0, ends.len()] whose candidate fits.
    let (mut lo, mut hi) = (0usize, ends.len());
    if estimator.estimate(&candidate(0)) > budget {
        return String::new();
    }
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if estimator.estimate(&candidate(mid)) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    candidate(lo)
}
