//! Execution of parsed calls against a browser session and the chat.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{ActionCall, ArgValue};
use crate::chat::{Chat, ChatRole};
use crate::driver::input::{modifier_bit, split_combination, KeyDefinition};
use crate::driver::{DriverError, InputEvent, MouseButton, NavCommand, Session};
use crate::observation::BidString;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecResult {
    /// Calls attempted, including a failing last one.
    pub executed: usize,
    pub last_error: Option<String>,
    pub chat_emissions: Vec<String>,
}

#[derive(Debug, Error)]
enum ActionError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("{0}")]
    Rejected(String),
}

/// Run calls in order and stop at the first failure. Errors are captured in
/// the result, never returned.
pub async fn execute(calls: &[ActionCall], session: &mut Session, chat: &Chat, step: u64) -> ExecResult {
    let mut result = ExecResult::default();
    for call in calls {
        result.executed += 1;
        let outcome = run_one(call, session, chat, step, &mut result.chat_emissions).await;
        // Popups opened by the action become pages of the session either way.
        let _ = session.sync_pages().await;
        session.settle_after_action().await;
        if let Err(e) = outcome {
            result.last_error = Some(format!("{call} failed: {e}"));
            break;
        }
    }
    result
}

fn bid_arg(call: &ActionCall, i: usize) -> Result<BidString, ActionError> {
    let raw = call.arg_str(i).unwrap_or_default();
    BidString::parse(raw).map_err(|e| ActionError::Rejected(format!("unknown bid {raw:?} ({e})")))
}

fn button_arg(call: &ActionCall, i: usize) -> MouseButton {
    call.arg_str(i)
        .and_then(MouseButton::parse)
        .unwrap_or_default()
}

fn num(call: &ActionCall, i: usize) -> f64 {
    call.arg_num(i).unwrap_or(0.0)
}

fn text(call: &ActionCall, i: usize) -> String {
    call.arg_str(i).unwrap_or_default().to_string()
}

async fn run_one(
    call: &ActionCall,
    session: &mut Session,
    chat: &Chat,
    step: u64,
    emissions: &mut Vec<String>,
) -> Result<(), ActionError> {
    match call.name.as_str() {
        "noop" => Ok(()),
        "send_msg_to_user" => {
            let msg = text(call, 0);
            chat.push(ChatRole::Agent, msg.clone(), step);
            emissions.push(msg);
            Ok(())
        }
        "fill" => fill(session, &bid_arg(call, 0)?, &text(call, 1)).await,
        "click" => click(session, &bid_arg(call, 0)?, button_arg(call, 1), 1).await,
        "dblclick" => click(session, &bid_arg(call, 0)?, button_arg(call, 1), 2).await,
        "hover" => {
            let (x, y) = prepare_pointer(session, &bid_arg(call, 0)?).await?;
            session.dispatch(&InputEvent::mouse_move(x, y)).await?;
            Ok(())
        }
        "press" => {
            let bid = bid_arg(call, 0)?;
            focus(session, &bid).await?;
            press_combination(session, &text(call, 1)).await
        }
        "focus" => focus(session, &bid_arg(call, 0)?).await,
        "clear" => {
            let bid = bid_arg(call, 0)?;
            check_editable(session, &bid).await?;
            library(session, "clear", &[json!(bid.as_str())]).await?;
            Ok(())
        }
        "select_option" => {
            let bid = bid_arg(call, 0)?;
            let wanted: Vec<String> = match call.args.get(1) {
                Some(ArgValue::List(items)) => items.clone(),
                Some(ArgValue::Str(s)) => vec![s.clone()],
                _ => Vec::new(),
            };
            check_enabled(session, &bid).await?;
            library(session, "selectOptions", &[json!(bid.as_str()), json!(wanted)]).await?;
            Ok(())
        }
        "drag_and_drop" => {
            let from = bid_arg(call, 0)?;
            let to = bid_arg(call, 1)?;
            let (fx, fy) = prepare_pointer(session, &from).await?;
            resolve(session, &to).await?;
            let (tx, ty) = center_of(session, &to).await?;
            drag(session, (fx, fy), (tx, ty)).await
        }
        "mouse_move" => {
            session
                .dispatch(&InputEvent::mouse_move(num(call, 0), num(call, 1)))
                .await?;
            Ok(())
        }
        "mouse_down" | "mouse_up" => {
            let (x, y) = (num(call, 0), num(call, 1));
            let button = button_arg(call, 2);
            session.dispatch(&InputEvent::mouse_move(x, y)).await?;
            let ev = if call.name == "mouse_down" {
                InputEvent::mouse_down(x, y, button)
            } else {
                InputEvent::mouse_up(x, y, button)
            };
            session.dispatch(&ev).await?;
            Ok(())
        }
        "mouse_click" => mouse_click(session, num(call, 0), num(call, 1), button_arg(call, 2), 1).await,
        "mouse_dblclick" => mouse_click(session, num(call, 0), num(call, 1), button_arg(call, 2), 2).await,
        "mouse_drag_and_drop" => {
            drag(session, (num(call, 0), num(call, 1)), (num(call, 2), num(call, 3))).await
        }
        "keyboard_down" => {
            session.dispatch(&InputEvent::key_down(text(call, 0))).await?;
            Ok(())
        }
        "keyboard_up" => {
            session.dispatch(&InputEvent::key_up(text(call, 0))).await?;
            Ok(())
        }
        "keyboard_press" => press_combination(session, &text(call, 0)).await,
        "keyboard_type" => type_text(session, &text(call, 0)).await,
        "keyboard_insert_text" => {
            session.insert_text(&text(call, 0)).await?;
            Ok(())
        }
        "new_tab" => Ok(session.navigate(NavCommand::NewTab).await?),
        "tab_close" => Ok(session.navigate(NavCommand::TabClose).await?),
        "tab_focus" => Ok(session
            .navigate(NavCommand::TabFocus(num(call, 0) as usize))
            .await?),
        "go_back" => Ok(session.navigate(NavCommand::GoBack).await?),
        "go_forward" => Ok(session.navigate(NavCommand::GoForward).await?),
        "goto" => Ok(session.navigate(NavCommand::Goto(text(call, 0))).await?),
        "scroll" => {
            let vp = session.viewport();
            let (px, py) = session.pointer();
            let inside = px > 0.0 && py > 0.0 && px < vp.width as f64 && py < vp.height as f64;
            let at = if inside {
                (px, py)
            } else {
                (vp.width as f64 / 2.0, vp.height as f64 / 2.0)
            };
            session
                .dispatch(&InputEvent::wheel(num(call, 0), num(call, 1)).at(at.0, at.1))
                .await?;
            // Wheel scrolling is applied asynchronously by the compositor.
            tokio::time::sleep(Duration::from_millis(100)).await;
            Ok(())
        }
        other => Err(ActionError::Rejected(format!("action {other:?} is not implemented"))),
    }
}

async fn library(session: &mut Session, function: &str, args: &[Value]) -> Result<Value, ActionError> {
    session
        .call_library(function, args)
        .await
        .map_err(|e| match e {
            DriverError::Script(msg) => ActionError::Rejected(clean_script_error(&msg)),
            other => other.into(),
        })
}

/// Strip the JavaScript stack from an exception description.
fn clean_script_error(msg: &str) -> String {
    let first = msg.lines().next().unwrap_or(msg);
    first.strip_prefix("Error: ").unwrap_or(first).to_string()
}

async fn resolve(session: &mut Session, bid: &BidString) -> Result<(), ActionError> {
    session.resolve(bid).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ElementInfo {
    tag: String,
    #[serde(rename = "type")]
    input_type: Option<String>,
    editable: bool,
    disabled: bool,
    readonly: bool,
}

async fn describe(session: &mut Session, bid: &BidString) -> Result<ElementInfo, ActionError> {
    resolve(session, bid).await?;
    let v = library(session, "describe", &[json!(bid.as_str())]).await?;
    serde_json::from_value(v).map_err(|e| ActionError::Rejected(e.to_string()))
}

async fn check_enabled(session: &mut Session, bid: &BidString) -> Result<ElementInfo, ActionError> {
    let info = describe(session, bid).await?;
    if info.disabled {
        return Err(ActionError::Rejected(format!("element {bid} is disabled")));
    }
    Ok(info)
}

const TEXT_TYPES: &[&str] = &["text", "email", "password", "search", "tel", "url", "number"];
const VALUE_TYPES: &[&str] = &["date", "time", "datetime-local", "month", "week", "color", "range"];

async fn check_editable(session: &mut Session, bid: &BidString) -> Result<ElementInfo, ActionError> {
    let info = check_enabled(session, bid).await?;
    if info.readonly {
        return Err(ActionError::Rejected(format!("element {bid} is read-only")));
    }
    let ok = match info.tag.as_str() {
        "textarea" => true,
        "input" => {
            let t = info.input_type.as_deref().unwrap_or("text");
            if matches!(t, "checkbox" | "radio") {
                return Err(ActionError::Rejected(format!(
                    "element {bid} is a {t} input and cannot be filled; use click(\"{bid}\") to toggle it"
                )));
            }
            TEXT_TYPES.contains(&t) || VALUE_TYPES.contains(&t)
        }
        "select" => {
            return Err(ActionError::Rejected(format!(
                "element {bid} is a <select>; use select_option(\"{bid}\", ...) instead"
            )))
        }
        _ => info.editable,
    };
    if !ok {
        return Err(ActionError::Rejected(format!(
            "element {bid} ({}) is not a fillable text field",
            info.tag
        )));
    }
    Ok(info)
}

async fn fill(session: &mut Session, bid: &BidString, value: &str) -> Result<(), ActionError> {
    let info = check_editable(session, bid).await?;
    let value_like = info.tag == "input"
        && VALUE_TYPES.contains(&info.input_type.as_deref().unwrap_or("text"));
    if value_like {
        // Date and similar pickers do not take typed text uniformly.
        let set = library(session, "setValue", &[json!(bid.as_str()), json!(value)]).await?;
        if set.as_str() != Some(value) {
            return Err(ActionError::Rejected(format!(
                "value {value:?} is not valid for element {bid}"
            )));
        }
        return Ok(());
    }
    library(session, "scrollIntoView", &[json!(bid.as_str())]).await?;
    library(session, "clear", &[json!(bid.as_str())]).await?;
    if !value.is_empty() {
        session.insert_text(value).await?;
    }
    Ok(())
}

async fn focus(session: &mut Session, bid: &BidString) -> Result<(), ActionError> {
    resolve(session, bid).await?;
    library(session, "focus", &[json!(bid.as_str())]).await?;
    Ok(())
}

async fn center_of(session: &mut Session, bid: &BidString) -> Result<(f64, f64), ActionError> {
    let b = library(session, "box", &[json!(bid.as_str())]).await?;
    box_center(bid, &b)
}

fn box_center(bid: &BidString, b: &Value) -> Result<(f64, f64), ActionError> {
    let v: Vec<f64> = b
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .unwrap_or_default();
    if v.len() != 4 || v[2] - v[0] <= 0.0 || v[3] - v[1] <= 0.0 {
        return Err(ActionError::Rejected(format!(
            "element {bid} has no visible area and cannot be pointed at"
        )));
    }
    Ok(((v[0] + v[2]) / 2.0, (v[1] + v[3]) / 2.0))
}

/// Resolve, scroll into view, and return the element's center.
async fn prepare_pointer(session: &mut Session, bid: &BidString) -> Result<(f64, f64), ActionError> {
    resolve(session, bid).await?;
    let b = library(session, "scrollIntoView", &[json!(bid.as_str())]).await?;
    box_center(bid, &b)
}

async fn click(session: &mut Session, bid: &BidString, button: MouseButton, count: u32) -> Result<(), ActionError> {
    check_enabled(session, bid).await?;
    let (x, y) = prepare_pointer(session, bid).await?;
    mouse_click(session, x, y, button, count).await
}

async fn mouse_click(session: &mut Session, x: f64, y: f64, button: MouseButton, count: u32) -> Result<(), ActionError> {
    session.dispatch(&InputEvent::mouse_move(x, y)).await?;
    for n in 1..=count {
        session
            .dispatch(&InputEvent::mouse_down(x, y, button).with_click_count(n))
            .await?;
        session
            .dispatch(&InputEvent::mouse_up(x, y, button).with_click_count(n))
            .await?;
    }
    Ok(())
}

async fn drag(session: &mut Session, from: (f64, f64), to: (f64, f64)) -> Result<(), ActionError> {
    session.dispatch(&InputEvent::mouse_move(from.0, from.1)).await?;
    session
        .dispatch(&InputEvent::mouse_down(from.0, from.1, MouseButton::Left))
        .await?;
    const STEPS: usize = 5;
    for i in 1..=STEPS {
        let t = i as f64 / STEPS as f64;
        let (x, y) = (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t);
        session
            .dispatch(&InputEvent::mouse_move(x, y).with_modifiers(0))
            .await?;
    }
    session
        .dispatch(&InputEvent::mouse_up(to.0, to.1, MouseButton::Left))
        .await?;
    Ok(())
}

async fn press_combination(session: &mut Session, combo: &str) -> Result<(), ActionError> {
    let keys = split_combination(combo)?;
    let (main, mods) = keys.split_last().expect("split_combination returns at least one key");
    let mut mask = 0;
    for m in mods {
        let bit = modifier_bit(m).ok_or_else(|| {
            ActionError::Rejected(format!("{m:?} is not a modifier key in {combo:?}"))
        })?;
        session
            .dispatch(&InputEvent::key_down(m.clone()).with_modifiers(mask))
            .await?;
        mask |= bit;
    }
    session
        .dispatch(&InputEvent::key_down(main.clone()).with_modifiers(mask))
        .await?;
    session
        .dispatch(&InputEvent::key_up(main.clone()).with_modifiers(mask))
        .await?;
    for m in mods.iter().rev() {
        mask &= !modifier_bit(m).unwrap_or(0);
        session
            .dispatch(&InputEvent::key_up(m.clone()).with_modifiers(mask))
            .await?;
    }
    Ok(())
}

async fn type_text(session: &mut Session, text: &str) -> Result<(), ActionError> {
    for c in text.chars() {
        let name = match c {
            '\n' => "Enter".to_string(),
            c => c.to_string(),
        };
        if KeyDefinition::lookup(&name).is_some() {
            session.dispatch(&InputEvent::key_down(name.clone())).await?;
            session.dispatch(&InputEvent::key_up(name)).await?;
        } else {
            session.dispatch(&InputEvent::char(name)).await?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_errors_lose_their_stack() {
        let msg = "Error: option \"x\" not found in element 4\n    at selectOptions (<anonymous>:1:2)";
        assert_eq!(clean_script_error(msg), "option \"x\" not found in element 4");
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        let bid = BidString::parse("3").unwrap();
        assert!(box_center(&bid, &json!([0, 0, 0, 0])).is_err());
        assert_eq!(box_center(&bid, &json!([10, 10, 30, 20])).unwrap(), (20.0, 15.0));
    }
}
