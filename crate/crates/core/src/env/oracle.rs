//! Scripted solutions expressed against accessibility targets.
//!
//! Bids change with every marking pass, so an oracle step names its element
//! by accessibility role and name. The step is turned into concrete call
//! text against whichever observation is current.

use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::actions::{build_catalog, execute, parse, ActionSet};
use crate::chat::Chat;
use crate::driver::Session;
use crate::observation::{snapshot, AxTree};

/// An element identified by accessibility role and exact name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxTarget {
    pub role: String,
    pub name: String,
}

/// One oracle action. `template` is call text in which `{bid}` stands for
/// the target's bid, e.g. `click("{bid}")`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStep {
    pub template: String,
    pub target: Option<AxTarget>,
}

impl OracleStep {
    pub fn on(role: &str, name: &str, template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            target: Some(AxTarget {
                role: role.to_string(),
                name: name.to_string(),
            }),
        }
    }

    pub fn plain(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            target: None,
        }
    }

    /// Concrete call text using the first matching node of a structured tree.
    pub fn resolve(&self, tree: &AxTree) -> Result<String, String> {
        let Some(t) = &self.target else {
            return Ok(self.template.clone());
        };
        let bid = tree
            .nodes()
            .into_iter()
            .find(|n| n.role == t.role && n.name == t.name && n.bid.is_some())
            .and_then(|n| n.bid.clone())
            .ok_or_else(|| format!("no {} named {:?} on the page", t.role, t.name))?;
        Ok(self.template.replace("{bid}", bid.as_str()))
    }

    /// Concrete call text using the first matching line of rendered AXTree text.
    pub fn resolve_in_text(&self, ax_text: &str) -> Option<String> {
        let Some(t) = &self.target else {
            return Some(self.template.clone());
        };
        let wanted = format!("{} {}", t.role, crate::observation::quote_text(&t.name));
        ax_text.lines().find_map(|line| {
            let rest = line.trim_start().strip_prefix('[')?;
            let (bid, tail) = rest.split_once("] ")?;
            let after = tail.strip_prefix(&wanted)?;
            (after.is_empty() || after.starts_with(' '))
                .then(|| self.template.replace("{bid}", bid))
        })
    }
}

/// Execute oracle steps through the action layer, re-observing before each.
pub async fn run_oracle(steps: &[OracleStep], session: &mut Session, chat: &Chat) -> Result<(), TaskError> {
    let catalog = build_catalog(ActionSet::BidCoord, false);
    for (i, step) in steps.iter().enumerate() {
        let (_, ax) = snapshot(session)
            .await
            .map_err(|e| TaskError::Oracle(format!("step {i}: {e}")))?;
        let text = step
            .resolve(&ax)
            .map_err(|e| TaskError::Oracle(format!("step {i}: {e}")))?;
        let calls = parse(&text, &catalog)
            .map_err(|e| TaskError::Oracle(format!("step {i}: {e}")))?;
        let res = execute(&calls, session, chat, i as u64 + 1).await;
        if let Some(err) = res.last_error {
            return Err(TaskError::Oracle(format!("step {i}: {err}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_against_rendered_text() {
        let text = "RootWebArea \"Page\"\n\t[4] button \"Save\" (visible)\n\t[5] button \"Save draft\"";
        let step = OracleStep::on("button", "Save draft", "click(\"{bid}\")");
        assert_eq!(step.resolve_in_text(text).as_deref(), Some("click(\"5\")"));
        let step = OracleStep::on("button", "Save", "click(\"{bid}\")");
        assert_eq!(step.resolve_in_text(text).as_deref(), Some("click(\"4\")"));
        assert!(OracleStep::on("link", "Save", "click(\"{bid}\")").resolve_in_text(text).is_none());
        assert_eq!(OracleStep::plain("noop()").resolve_in_text("").as_deref(), Some("noop()"));
    }
}
