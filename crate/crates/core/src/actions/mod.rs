//! High-level action primitives: the catalog offered to agents, its textual
//! description, the call grammar, and execution against a browser session.
//!
//! # Grammar
//!
//! ```text
//! program := line*                    one call per non-blank line
//! line    := name "(" [arg ("," arg)* [","]] ")"
//! arg     := string | number | "[" [string ("," string)*] "]"
//! string  := '"' chars '"' | "'" chars "'"      backslash escapes \n \t \r \\ \" \'
//! number  := "-"? digits ("." digits)?
//! ```
//!
//! A fenced code block around the calls is stripped. There are no keyword
//! arguments and no nesting. Bids may also be written as bare integers.

mod exec;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use exec::{execute, ExecResult};
pub use parse::{parse, render, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Bid,
    Coord,
    Tab,
    Nav,
    Misc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSet {
    #[serde(rename = "bid")]
    Bid,
    #[serde(rename = "bid+coord")]
    BidCoord,
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionSet::Bid => "bid",
            ActionSet::BidCoord => "bid+coord",
        })
    }
}

/// Semantic type of a parameter, which fixes the value kinds it accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Element identifier; a string, or a bare non-negative integer.
    Bid,
    Text,
    Number,
    /// Non-negative integer.
    Index,
    /// One of `left`, `middle`, `right`.
    Button,
    /// A key name or a `+`-joined combination.
    Key,
    /// A single string or a list of strings.
    Options,
}

impl ParamKind {
    fn describe(self) -> &'static str {
        match self {
            ParamKind::Bid => "a bid string",
            ParamKind::Text => "a string",
            ParamKind::Number => "a number",
            ParamKind::Index => "a non-negative integer",
            ParamKind::Button => "one of \"left\", \"middle\", \"right\"",
            ParamKind::Key => "a key or key combination string",
            ParamKind::Options => "a string or a list of strings",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitiveSpec {
    pub name: &'static str,
    pub category: Category,
    pub params: Vec<ParamSpec>,
    pub short: &'static str,
    pub long: &'static str,
    /// Canonical example call, in call syntax.
    pub example: &'static str,
}

impl PrimitiveSpec {
    /// Signature such as `click(bid, button)`.
    pub fn signature(&self) -> String {
        let params: Vec<_> = self.params.iter().map(|p| p.name).collect();
        format!("{}({})", self.name, params.join(", "))
    }

    pub fn required_arity(&self) -> usize {
        self.params.iter().filter(|p| !p.optional).count()
    }
}

/// One argument value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Str(String),
    Num(f64),
    List(Vec<String>),
}

impl ArgValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            ArgValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            ArgValue::Num(n) => Some(*n),
            _ => None,
        }
    }
}

/// A parsed invocation of a primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: String,
    pub args: Vec<ArgValue>,
}

impl ActionCall {
    pub fn new(name: impl Into<String>, args: Vec<ArgValue>) -> Self {
        Self {
            name: name.into(),
            args,
        }
    }

    pub fn arg_str(&self, i: usize) -> Option<&str> {
        self.args.get(i).and_then(ArgValue::as_str)
    }

    pub fn arg_num(&self, i: usize) -> Option<f64> {
        self.args.get(i).and_then(ArgValue::as_num)
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(std::slice::from_ref(self)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionCatalog {
    pub action_set: ActionSet,
    pub multi_actions: bool,
    pub primitives: Vec<PrimitiveSpec>,
}

impl ActionCatalog {
    pub fn get(&self, name: &str) -> Option<&PrimitiveSpec> {
        self.primitives.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.primitives.iter().map(|p| p.name).collect()
    }
}

fn p(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        optional: false,
    }
}

fn opt(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        optional: true,
    }
}

/// Every primitive, in catalog order (category, then name).
pub fn all_primitives() -> Vec<PrimitiveSpec> {
    use Category::*;
    use ParamKind::*;
    let mut prims = vec![
        PrimitiveSpec {
            name: "fill",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid), p("text", Text)],
            short: "Fill an input field with text.",
            long: "Focus the text field identified by bid, clear its current content, then type text into it. Works on text inputs, text areas, contenteditable elements and date-like inputs; checkboxes and radio buttons must be clicked instead.",
            example: r#"fill("45", "Alice Smith")"#,
        },
        PrimitiveSpec {
            name: "click",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid), opt("button", Button)],
            short: "Click an element.",
            long: "Scroll the element identified by bid into view and click its center. button is one of \"left\", \"middle\", \"right\" and defaults to \"left\" when omitted.",
            example: r#"click("51")"#,
        },
        PrimitiveSpec {
            name: "dblclick",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid), opt("button", Button)],
            short: "Double-click an element.",
            long: "Scroll the element identified by bid into view and double-click its center. button is one of \"left\", \"middle\", \"right\" and defaults to \"left\" when omitted.",
            example: r#"dblclick("12", "left")"#,
        },
        PrimitiveSpec {
            name: "hover",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid)],
            short: "Hover the mouse over an element.",
            long: "Scroll the element identified by bid into view and move the mouse pointer over its center without clicking.",
            example: r#"hover("7")"#,
        },
        PrimitiveSpec {
            name: "press",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid), p("key_comb", Key)],
            short: "Focus an element and press a combination of keys.",
            long: "Focus the element identified by bid, then press key_comb. Combinations join key names with \"+\", for example \"Enter\", \"Control+a\" or \"Shift+ArrowDown\".",
            example: r#"press("88", "Enter")"#,
        },
        PrimitiveSpec {
            name: "focus",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid)],
            short: "Focus an element.",
            long: "Give keyboard focus to the element identified by bid without clicking it.",
            example: r#"focus("34")"#,
        },
        PrimitiveSpec {
            name: "clear",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid)],
            short: "Clear an input field.",
            long: "Remove all content from the input field identified by bid.",
            example: r#"clear("45")"#,
        },
        PrimitiveSpec {
            name: "select_option",
            category: Category::Bid,
            params: vec![p("bid", ParamKind::Bid), p("options", Options)],
            short: "Select one or multiple options in a drop-down element.",
            long: "Select options of the <select> element identified by bid. options is a single option or a list of options, each matched against option values first and visible labels second. Lists are only accepted by multi-select elements.",
            example: r#"select_option("23", ["Red", "Blue"])"#,
        },
        PrimitiveSpec {
            name: "drag_and_drop",
            category: Category::Bid,
            params: vec![p("from_bid", ParamKind::Bid), p("to_bid", ParamKind::Bid)],
            short: "Drag and drop one element to another.",
            long: "Press the mouse on the center of from_bid, move it to the center of to_bid and release it there.",
            example: r#"drag_and_drop("56", "498")"#,
        },
        PrimitiveSpec {
            name: "mouse_move",
            category: Coord,
            params: vec![p("x", Number), p("y", Number)],
            short: "Move the mouse to a location.",
            long: "Move the mouse pointer to viewport coordinates (x, y) in CSS pixels.",
            example: "mouse_move(65.2, 158.5)",
        },
        PrimitiveSpec {
            name: "mouse_down",
            category: Coord,
            params: vec![p("x", Number), p("y", Number), opt("button", Button)],
            short: "Move the mouse to a location then press and hold a mouse button.",
            long: "Move the mouse pointer to (x, y), then press and hold button (\"left\" by default).",
            example: "mouse_down(140, 210)",
        },
        PrimitiveSpec {
            name: "mouse_up",
            category: Coord,
            params: vec![p("x", Number), p("y", Number), opt("button", Button)],
            short: "Move the mouse to a location then release a mouse button.",
            long: "Move the mouse pointer to (x, y), then release button (\"left\" by default).",
            example: r#"mouse_up(250, 120, "left")"#,
        },
        PrimitiveSpec {
            name: "mouse_click",
            category: Coord,
            params: vec![p("x", Number), p("y", Number), opt("button", Button)],
            short: "Move the mouse to a location and click a mouse button.",
            long: "Move the mouse pointer to (x, y) and click button (\"left\" by default).",
            example: "mouse_click(887, 40)",
        },
        PrimitiveSpec {
            name: "mouse_dblclick",
            category: Coord,
            params: vec![p("x", Number), p("y", Number), opt("button", Button)],
            short: "Move the mouse to a location and double-click a mouse button.",
            long: "Move the mouse pointer to (x, y) and double-click button (\"left\" by default).",
            example: r#"mouse_dblclick(5, 236, "left")"#,
        },
        PrimitiveSpec {
            name: "mouse_drag_and_drop",
            category: Coord,
            params: vec![p("from_x", Number), p("from_y", Number), p("to_x", Number), p("to_y", Number)],
            short: "Drag and drop from a location to a location.",
            long: "Press the left mouse button at (from_x, from_y), move to (to_x, to_y) and release.",
            example: "mouse_drag_and_drop(10.7, 325, 235.6, 24.54)",
        },
        PrimitiveSpec {
            name: "keyboard_down",
            category: Coord,
            params: vec![p("key", Key)],
            short: "Press and hold a keyboard key.",
            long: "Press key and keep it held down until a matching keyboard_up.",
            example: r#"keyboard_down("Shift")"#,
        },
        PrimitiveSpec {
            name: "keyboard_up",
            category: Coord,
            params: vec![p("key", Key)],
            short: "Release a keyboard key.",
            long: "Release a key previously pressed with keyboard_down.",
            example: r#"keyboard_up("Shift")"#,
        },
        PrimitiveSpec {
            name: "keyboard_press",
            category: Coord,
            params: vec![p("key_comb", Key)],
            short: "Press a combination of keys.",
            long: "Press and release key_comb on the focused element. Combinations join key names with \"+\", for example \"Control+a\".",
            example: r#"keyboard_press("Backspace")"#,
        },
        PrimitiveSpec {
            name: "keyboard_type",
            category: Coord,
            params: vec![p("text", Text)],
            short: "Type a string of text through the keyboard.",
            long: "Type text one key at a time into the focused element, firing key events for every character.",
            example: r#"keyboard_type("Hello world!")"#,
        },
        PrimitiveSpec {
            name: "keyboard_insert_text",
            category: Coord,
            params: vec![p("text", Text)],
            short: "Insert a string of text in the currently focused element.",
            long: "Insert text at the caret of the focused element in one edit, without individual key events.",
            example: r#"keyboard_insert_text("Hello world!")"#,
        },
        PrimitiveSpec {
            name: "new_tab",
            category: Tab,
            params: vec![],
            short: "Open a new tab.",
            long: "Open a new blank tab and make it the active tab.",
            example: "new_tab()",
        },
        PrimitiveSpec {
            name: "tab_close",
            category: Tab,
            params: vec![],
            short: "Close the current tab.",
            long: "Close the active tab and return to the previously active one. The last remaining tab cannot be closed.",
            example: "tab_close()",
        },
        PrimitiveSpec {
            name: "tab_focus",
            category: Tab,
            params: vec![p("index", Index)],
            short: "Bring a tab to front (activate tab).",
            long: "Make the tab at position index (0-based, in opening order) the active tab.",
            example: "tab_focus(2)",
        },
        PrimitiveSpec {
            name: "go_back",
            category: Nav,
            params: vec![],
            short: "Navigate to the previous page in history.",
            long: "Go back one entry in the active tab's history.",
            example: "go_back()",
        },
        PrimitiveSpec {
            name: "go_forward",
            category: Nav,
            params: vec![],
            short: "Navigate to the next page in history.",
            long: "Go forward one entry in the active tab's history.",
            example: "go_forward()",
        },
        PrimitiveSpec {
            name: "goto",
            category: Nav,
            params: vec![p("url", Text)],
            short: "Navigate to a url.",
            long: "Load url in the active tab and wait for the page to settle.",
            example: r#"goto("http://www.example.com")"#,
        },
        PrimitiveSpec {
            name: "scroll",
            category: Misc,
            params: vec![p("dx", Number), p("dy", Number)],
            short: "Scroll pixels in X and/or Y direction.",
            long: "Scroll the active page by dx pixels horizontally and dy pixels vertically, at the mouse position. Positive dy scrolls down.",
            example: "scroll(0, 200)",
        },
        PrimitiveSpec {
            name: "send_msg_to_user",
            category: Misc,
            params: vec![p("text", Text)],
            short: "Send a message to the user in the chat.",
            long: "Post text to the chat. Use it to answer questions or report results to the user.",
            example: r#"send_msg_to_user("Based on the results of my search, the city was built in 1751.")"#,
        },
        PrimitiveSpec {
            name: "noop",
            category: Misc,
            params: vec![],
            short: "Do nothing.",
            long: "Take no action for this step, for example to wait for the page to update.",
            example: "noop()",
        },
    ];
    prims.sort_by(|a, b| (a.category, a.name).cmp(&(b.category, b.name)));
    prims
}

/// The primitives of an action set. `bid` leaves out every coordinate primitive.
pub fn build_catalog(action_set: ActionSet, multi_actions: bool) -> ActionCatalog {
    let primitives = all_primitives()
        .into_iter()
        .filter(|p| action_set == ActionSet::BidCoord || p.category != Category::Coord)
        .collect();
    ActionCatalog {
        action_set,
        multi_actions,
        primitives,
    }
}

/// Text description of a catalog: one block per primitive holding its
/// signature, its description and, when requested, its example call.
pub fn describe(catalog: &ActionCatalog, long_description: bool, individual_examples: bool) -> String {
    let mut blocks = Vec::new();
    for prim in &catalog.primitives {
        let mut block = prim.signature();
        block.push_str("\n    ");
        block.push_str(if long_description { prim.long } else { prim.short });
        if individual_examples {
            block.push_str("\n    Example: ");
            block.push_str(prim.example);
        }
        blocks.push(block);
    }
    blocks.join("\n\n")
}
