//! Prompt assembly under a token budget, and completion post-processing.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AgentConfig, HistoryEntry};
use crate::chat::ChatRole;
use crate::env::Observation;
use crate::observation::{truncate_to_budget, TokenEstimator, TRUNCATION_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One role-tagged prompt message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

pub const SYSTEM_PROMPT: &str = "You are an agent operating a web browser on behalf of a user. \
At every step you receive the conversation with the user, a description of the current page and \
the actions available to you. Decide on the next action that brings you closer to the user's goal. \
Answer questions and report results to the user with send_msg_to_user.";

pub const CHAT_HEADER: &str = "# Chat messages";
pub const TABS_HEADER: &str = "# Open tabs";
pub const AXTREE_HEADER: &str = "# Accessibility tree of the active page";
pub const DOM_HEADER: &str = "# HTML of the active page";
pub const FOCUSED_HEADER: &str = "# Focused element";
pub const LAST_ERROR_HEADER: &str = "# Error from the last action";
pub const ACTION_SPACE_HEADER: &str = "# Action space";
pub const ACTION_HISTORY_HEADER: &str = "# History of past actions";
pub const ERROR_HISTORY_HEADER: &str = "# History of past errors";
pub const THINK_HISTORY_HEADER: &str = "# History of past thoughts";
pub const EXAMPLE_HEADER: &str = "# Example answer";
pub const INSTRUCTION_HEADER: &str = "# Your answer";

const EXAMPLE: &str = "<think>\nThe goal asks me to submit the form. The button labelled \"Submit\" \
has bid 12, so I will click it.\n</think>\n<action>\nclick(\"12\")\n</action>";

const THINK_INSTRUCTION: &str = "First reason step by step about the goal and the current page inside \
<think></think> tags. Then give your next action inside <action></action> tags.";

const ACTION_INSTRUCTION: &str = "Give your next action inside <action></action> tags.";

/// Prompt sections, in prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    Chat,
    Tabs,
    AxTree,
    Dom,
    Focused,
    LastError,
    ActionSpace,
    ActionHistory,
    ErrorHistory,
    ThinkHistory,
    Example,
    Instruction,
}

/// Which sections give up space first when the prompt is over budget.
pub const TRUNCATION_ORDER: &[SectionKind] = &[
    SectionKind::Dom,
    SectionKind::AxTree,
    SectionKind::ThinkHistory,
    SectionKind::ErrorHistory,
    SectionKind::ActionHistory,
    SectionKind::ActionSpace,
    SectionKind::Chat,
];

#[derive(Debug, Clone)]
struct Section {
    kind: SectionKind,
    header: &'static str,
    body: String,
}

impl Section {
    fn text(&self) -> String {
        format!("{}\n{}", self.header, self.body)
    }
}

fn chat_body(obs: &Observation) -> String {
    let mut out = String::new();
    for m in &obs.chat {
        let role = match m.role {
            ChatRole::User => "user",
            ChatRole::Agent => "assistant",
            ChatRole::Info => "info",
        };
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = write!(out, "[{role}] {}", m.text);
    }
    out
}

fn tabs_body(obs: &Observation) -> String {
    obs.open_pages
        .iter()
        .enumerate()
        .map(|(i, url)| {
            let active = if i == obs.active_page { " (active)" } else { "" };
            format!("Tab {i}{active}: {url}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn history_body(history: &[HistoryEntry], pick: impl Fn(&HistoryEntry) -> Option<String>, empty: &str) -> String {
    let lines: Vec<String> = history
        .iter()
        .filter_map(|e| pick(e).map(|t| format!("step {}: {t}", e.step)))
        .collect();
    if lines.is_empty() {
        empty.to_string()
    } else {
        lines.join("\n")
    }
}

fn one_line(text: &str) -> String {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn sections(obs: &Observation, history: &[HistoryEntry], config: &AgentConfig, action_description: &str) -> Vec<Section> {
    let mut out = vec![
        Section { kind: SectionKind::Chat, header: CHAT_HEADER, body: chat_body(obs) },
        Section { kind: SectionKind::Tabs, header: TABS_HEADER, body: tabs_body(obs) },
        Section { kind: SectionKind::AxTree, header: AXTREE_HEADER, body: obs.axtree_text.clone() },
    ];
    if config.use_html {
        out.push(Section {
            kind: SectionKind::Dom,
            header: DOM_HEADER,
            body: obs.dom_text.clone().unwrap_or_default(),
        });
    }
    if config.use_focused_element {
        let body = match &obs.focused_bid {
            Some(b) => format!("[{b}]"),
            None => "None".to_string(),
        };
        out.push(Section { kind: SectionKind::Focused, header: FOCUSED_HEADER, body });
    }
    if config.use_last_error {
        out.push(Section {
            kind: SectionKind::LastError,
            header: LAST_ERROR_HEADER,
            body: obs.last_action_error.clone().unwrap_or_else(|| "None".to_string()),
        });
    }
    let multi = if config.multi_actions {
        "You may give several actions, one per line. They run in order and stop at the first error."
    } else {
        "Give exactly one action per answer."
    };
    out.push(Section {
        kind: SectionKind::ActionSpace,
        header: ACTION_SPACE_HEADER,
        body: format!("{multi}\n\n{action_description}"),
    });
    if config.use_action_history {
        out.push(Section {
            kind: SectionKind::ActionHistory,
            header: ACTION_HISTORY_HEADER,
            body: history_body(history, |e| Some(one_line(&e.action)), "No actions yet."),
        });
    }
    if config.use_error_history {
        out.push(Section {
            kind: SectionKind::ErrorHistory,
            header: ERROR_HISTORY_HEADER,
            body: history_body(history, |e| e.error.as_deref().map(one_line), "No errors yet."),
        });
    }
    if config.use_think_history {
        out.push(Section {
            kind: SectionKind::ThinkHistory,
            header: THINK_HISTORY_HEADER,
            body: history_body(history, |e| e.thought.as_deref().map(one_line), "No thoughts yet."),
        });
    }
    out.push(Section { kind: SectionKind::Example, header: EXAMPLE_HEADER, body: EXAMPLE.to_string() });
    let instruction = if config.use_thinking { THINK_INSTRUCTION } else { ACTION_INSTRUCTION };
    out.push(Section {
        kind: SectionKind::Instruction,
        header: INSTRUCTION_HEADER,
        body: instruction.to_string(),
    });
    out
}

fn join(sections: &[Section]) -> String {
    sections.iter().map(Section::text).collect::<Vec<_>>().join("\n\n")
}

/// Token estimate of a whole prompt: the sum over its messages.
pub fn prompt_tokens(messages: &[Message], estimator: &dyn TokenEstimator) -> usize {
    messages.iter().map(|m| estimator.estimate(&m.content)).sum()
}

/// Assemble the prompt for one decision. When over `max_prompt_tokens`, the
/// page channels are cut from the end first, then histories, then the action
/// description and transcript; whole messages are cut only as a last resort.
pub fn build_prompt(
    obs: &Observation,
    history: &[HistoryEntry],
    config: &AgentConfig,
    action_description: &str,
    estimator: &dyn TokenEstimator,
) -> Vec<Message> {
    let max = config.max_prompt_tokens;
    let mut system = SYSTEM_PROMPT.to_string();
    let mut secs = sections(obs, history, config, action_description);
    let total = |system: &str, secs: &[Section]| estimator.estimate(system) + estimator.estimate(&join(secs));

    for kind in TRUNCATION_ORDER {
        let current = total(&system, &secs);
        if current <= max {
            break;
        }
        let over = current - max;
        if let Some(sec) = secs.iter_mut().find(|s| s.kind == *kind) {
            let mut budget = estimator.estimate(&sec.body).saturating_sub(over);
            // A cut page channel keeps at least its marker, so the agent can
            // tell the page was truncated rather than empty.
            if matches!(kind, SectionKind::Dom | SectionKind::AxTree) && !sec.body.is_empty() {
                budget = budget.max(estimator.estimate(TRUNCATION_MARKER));
            }
            sec.body = truncate_to_budget(&sec.body, budget, estimator);
        }
    }

    let mut user = join(&secs);
    if estimator.estimate(&system) + estimator.estimate(&user) > max {
        user = truncate_to_budget(&user, max.saturating_sub(estimator.estimate(&system)), estimator);
    }
    if estimator.estimate(&system) + estimator.estimate(&user) > max {
        system = truncate_to_budget(&system, max.saturating_sub(estimator.estimate(&user)), estimator);
    }
    vec![Message::system(system), Message::user(user)]
}

/// Text between the last `<tag>` and its closing tag.
pub fn extract_tag(text: &str, tag: &str) -> Option<String> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.rfind(&open)? + open.len();
    let end = text[start..].find(&close).map_or(text.len(), |i| start + i);
    Some(text[start..end].trim().to_string())
}

/// Split a completion into (thought, action text). Without an action block
/// the whole completion, minus any thought block, is taken as the action.
pub fn split_completion(text: &str) -> (Option<String>, String) {
    let thought = extract_tag(text, "think").filter(|t| !t.is_empty());
    let action = match extract_tag(text, "action") {
        Some(a) => a,
        None => match (text.find("<think>"), text.find("</think>")) {
            (Some(s), Some(e)) if e > s => format!("{}{}", &text[..s], &text[e + "</think>".len()..]),
            _ => text.to_string(),
        }
        .trim()
        .to_string(),
    };
    (thought, action)
}

/// The retry message sent after an unparseable answer.
pub fn retry_message(error: &str) -> String {
    format!(
        "Your answer could not be parsed: {error}\n\
         Answer again with a valid action inside <action></action> tags."
    )
}
