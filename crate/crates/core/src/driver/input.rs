use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::DriverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    MouseMove,
    MouseDown,
    MouseUp,
    KeyDown,
    KeyUp,
    Char,
    Wheel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MouseButton {
    #[default]
    Left,
    Middle,
    Right,
}

impl MouseButton {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "left" => Some(Self::Left),
            "middle" => Some(Self::Middle),
            "right" => Some(Self::Right),
            _ => None,
        }
    }

    fn protocol_name(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Middle => "middle",
            Self::Right => "right",
        }
    }
}

/// A single low-level input event delivered to the active page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    pub kind: InputKind,
    pub coordinates: Option<(f64, f64)>,
    pub button: Option<MouseButton>,
    pub key: Option<String>,
    pub text: Option<String>,
    pub delta: Option<(f64, f64)>,
    /// Click count carried by press/release pairs; 2 for the second half of a double click.
    #[serde(default)]
    pub click_count: Option<u32>,
    /// Modifier bitmask (Alt=1, Control=2, Meta=4, Shift=8) applied to key and mouse events.
    #[serde(default)]
    pub modifiers: u32,
}

impl InputEvent {
    fn empty(kind: InputKind) -> Self {
        Self {
            kind,
            coordinates: None,
            button: None,
            key: None,
            text: None,
            delta: None,
            click_count: None,
            modifiers: 0,
        }
    }

    pub fn mouse_move(x: f64, y: f64) -> Self {
        Self {
            coordinates: Some((x, y)),
            ..Self::empty(InputKind::MouseMove)
        }
    }

    pub fn mouse_down(x: f64, y: f64, button: MouseButton) -> Self {
        Self {
            coordinates: Some((x, y)),
            button: Some(button),
            ..Self::empty(InputKind::MouseDown)
        }
    }

    pub fn mouse_up(x: f64, y: f64, button: MouseButton) -> Self {
        Self {
            coordinates: Some((x, y)),
            button: Some(button),
            ..Self::empty(InputKind::MouseUp)
        }
    }

    pub fn key_down(key: impl Into<String>) -> Self {
        Self {
            key: Some(key.into()),
            ..Self::empty(InputKind::KeyDown)
        }
    }

    pub fn key_up(key: impl Into<String>) -> Self {
        Self {
            key: Some(key.into()),
            ..Self::empty(InputKind::KeyUp)
        }
    }

    pub fn char(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::empty(InputKind::Char)
        }
    }

    pub fn wheel(dx: f64, dy: f64) -> Self {
        Self {
            delta: Some((dx, dy)),
            ..Self::empty(InputKind::Wheel)
        }
    }

    pub fn with_click_count(mut self, count: u32) -> Self {
        self.click_count = Some(count);
        self
    }

    pub fn with_modifiers(mut self, modifiers: u32) -> Self {
        self.modifiers = modifiers;
        self
    }

    pub fn at(mut self, x: f64, y: f64) -> Self {
        self.coordinates = Some((x, y));
        self
    }

    /// Mouse kinds need coordinates, key kinds need a key, wheel needs a delta.
    pub fn validate(&self) -> Result<(), DriverError> {
        let missing = |what: &str| {
            Err(DriverError::InvalidInput(format!(
                "{:?} event requires {what}",
                self.kind
            )))
        };
        match self.kind {
            InputKind::MouseMove | InputKind::MouseDown | InputKind::MouseUp
                if self.coordinates.is_none() =>
            {
                missing("coordinates")
            }
            InputKind::KeyDown | InputKind::KeyUp if self.key.is_none() => missing("a key"),
            InputKind::Char if self.text.as_deref().map_or(true, str::is_empty) => {
                missing("text")
            }
            InputKind::Wheel if self.delta.is_none() => missing("a delta"),
            _ => Ok(()),
        }
    }

    /// Protocol method and parameters for this event. `fallback` supplies the
    /// pointer position for wheel events without explicit coordinates.
    pub(crate) fn to_protocol(&self, fallback: (f64, f64)) -> Result<(&'static str, Value), DriverError> {
        self.validate()?;
        let button = self.button.unwrap_or_default().protocol_name();
        Ok(match self.kind {
            InputKind::MouseMove => {
                let (x, y) = self.coordinates.unwrap();
                (
                    "Input.dispatchMouseEvent",
                    json!({ "type": "mouseMoved", "x": x, "y": y, "modifiers": self.modifiers }),
                )
            }
            InputKind::MouseDown | InputKind::MouseUp => {
                let (x, y) = self.coordinates.unwrap();
                let ty = if self.kind == InputKind::MouseDown {
                    "mousePressed"
                } else {
                    "mouseReleased"
                };
                (
                    "Input.dispatchMouseEvent",
                    json!({
                        "type": ty,
                        "x": x,
                        "y": y,
                        "button": button,
                        "buttons": if self.kind == InputKind::MouseDown { button_mask(button) } else { 0 },
                        "clickCount": self.click_count.unwrap_or(1),
                        "modifiers": self.modifiers,
                    }),
                )
            }
            InputKind::Wheel => {
                let (x, y) = self.coordinates.unwrap_or(fallback);
                let (dx, dy) = self.delta.unwrap();
                (
                    "Input.dispatchMouseEvent",
                    json!({ "type": "mouseWheel", "x": x, "y": y, "deltaX": dx, "deltaY": dy, "modifiers": self.modifiers }),
                )
            }
            InputKind::KeyDown | InputKind::KeyUp => {
                let key = self.key.as_deref().unwrap();
                let def = KeyDefinition::lookup(key).ok_or_else(|| {
                    DriverError::InvalidInput(format!("unknown key {key:?}"))
                })?;
                let mut params = json!({
                    "key": def.key,
                    "code": def.code,
                    "windowsVirtualKeyCode": def.key_code,
                    "nativeVirtualKeyCode": def.key_code,
                    "modifiers": self.modifiers,
                    "location": def.location,
                });
                if self.kind == InputKind::KeyDown {
                    // Printable keys generate text only when no command modifier is held.
                    let text = self.text.clone().or_else(|| {
                        (self.modifiers & (MOD_CONTROL | MOD_ALT | MOD_META) == 0)
                            .then(|| def.text.clone())
                            .flatten()
                    });
                    match text {
                        Some(t) => {
                            params["type"] = json!("keyDown");
                            params["text"] = json!(t);
                            params["unmodifiedText"] = json!(t);
                        }
                        None => params["type"] = json!("rawKeyDown"),
                    }
                } else {
                    params["type"] = json!("keyUp");
                }
                ("Input.dispatchKeyEvent", params)
            }
            InputKind::Char => (
                "Input.dispatchKeyEvent",
                json!({ "type": "char", "text": self.text, "unmodifiedText": self.text, "modifiers": self.modifiers }),
            ),
        })
    }
}

fn button_mask(button: &str) -> u32 {
    match button {
        "left" => 1,
        "right" => 2,
        "middle" => 4,
        _ => 0,
    }
}

pub const MOD_ALT: u32 = 1;
pub const MOD_CONTROL: u32 = 2;
pub const MOD_META: u32 = 4;
pub const MOD_SHIFT: u32 = 8;

/// Modifier bit for a modifier key name, if it is one.
pub fn modifier_bit(key: &str) -> Option<u32> {
    match key {
        "Alt" => Some(MOD_ALT),
        "Control" | "Ctrl" => Some(MOD_CONTROL),
        "Meta" | "ControlOrMeta" => Some(MOD_META),
        "Shift" => Some(MOD_SHIFT),
        _ => None,
    }
}

/// Split a combination such as `Control+Shift+a` into its keys. A trailing
/// `+` (as in `Control++`) names the plus key itself.
pub fn split_combination(combo: &str) -> Result<Vec<String>, DriverError> {
    if combo.is_empty() {
        return Err(DriverError::InvalidInput("empty key combination".into()));
    }
    let mut keys = Vec::new();
    let mut rest = combo;
    while !rest.is_empty() {
        match rest.find('+') {
            Some(0) => {
                keys.push("+".to_string());
                rest = rest[1..].strip_prefix('+').unwrap_or(&rest[1..]);
            }
            Some(i) => {
                keys.push(rest[..i].to_string());
                rest = &rest[i + 1..];
            }
            None => {
                keys.push(rest.to_string());
                rest = "";
            }
        }
    }
    for k in &keys {
        if KeyDefinition::lookup(k).is_none() {
            return Err(DriverError::InvalidInput(format!("unknown key {k:?} in {combo:?}")));
        }
    }
    Ok(keys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyDefinition {
    pub key: String,
    pub code: String,
    pub key_code: u32,
    pub text: Option<String>,
    pub location: u32,
}

const NAMED_KEYS: &[(&str, &str, u32, Option<&str>, u32)] = &[
    ("Enter", "Enter", 13, Some("\r"), 0),
    ("Tab", "Tab", 9, None, 0),
    ("Backspace", "Backspace", 8, None, 0),
    ("Delete", "Delete", 46, None, 0),
    ("Escape", "Escape", 27, None, 0),
    ("ArrowUp", "ArrowUp", 38, None, 0),
    ("ArrowDown", "ArrowDown", 40, None, 0),
    ("ArrowLeft", "ArrowLeft", 37, None, 0),
    ("ArrowRight", "ArrowRight", 39, None, 0),
    ("Home", "Home", 36, None, 0),
    ("End", "End", 35, None, 0),
    ("PageUp", "PageUp", 33, None, 0),
    ("PageDown", "PageDown", 34, None, 0),
    ("Insert", "Insert", 45, None, 0),
    ("Shift", "ShiftLeft", 16, None, 1),
    ("Control", "ControlLeft", 17, None, 1),
    ("Alt", "AltLeft", 18, None, 1),
    ("Meta", "MetaLeft", 91, None, 1),
    ("Space", "Space", 32, Some(" "), 0),
    (" ", "Space", 32, Some(" "), 0),
];

const PUNCTUATION: &[(char, &str, u32)] = &[
    ('-', "Minus", 189),
    ('=', "Equal", 187),
    ('[', "BracketLeft", 219),
    (']', "BracketRight", 221),
    ('\\', "Backslash", 220),
    (';', "Semicolon", 186),
    ('\'', "Quote", 222),
    (',', "Comma", 188),
    ('.', "Period", 190),
    ('/', "Slash", 191),
    ('`', "Backquote", 192),
    ('+', "Equal", 187),
];

impl KeyDefinition {
    pub fn lookup(name: &str) -> Option<Self> {
        let name = match name {
            "Ctrl" => "Control",
            "ControlOrMeta" => "Control",
            "Esc" => "Escape",
            "Return" => "Enter",
            other => other,
        };
        if let Some(&(key, code, key_code, text, location)) =
            NAMED_KEYS.iter().find(|(k, ..)| *k == name)
        {
            return Some(Self {
                key: if key == "Space" { " ".to_string() } else { key.to_string() },
                code: code.to_string(),
                key_code,
                text: text.map(str::to_string),
                location,
            });
        }
        if let Some(n) = name.strip_prefix('F').and_then(|n| n.parse::<u32>().ok()) {
            if (1..=12).contains(&n) {
                return Some(Self {
                    key: name.to_string(),
                    code: name.to_string(),
                    key_code: 111 + n,
                    text: None,
                    location: 0,
                });
            }
        }
        let mut chars = name.chars();
        let c = chars.next()?;
        if chars.next().is_some() {
            return None;
        }
        if c.is_ascii_alphabetic() {
            let upper = c.to_ascii_uppercase();
            return Some(Self {
                key: c.to_string(),
                code: format!("Key{upper}"),
                key_code: upper as u32,
                text: Some(c.to_string()),
                location: 0,
            });
        }
        if c.is_ascii_digit() {
            return Some(Self {
                key: c.to_string(),
                code: format!("Digit{c}"),
                key_code: c as u32,
                text: Some(c.to_string()),
                location: 0,
            });
        }
        if let Some(&(_, code, key_code)) = PUNCTUATION.iter().find(|(p, ..)| *p == c) {
            return Some(Self {
                key: c.to_string(),
                code: code.to_string(),
                key_code,
                text: Some(c.to_string()),
                location: 0,
            });
        }
        // Any other single printable character is typed as text with no key code.
        (!c.is_control()).then(|| Self {
            key: c.to_string(),
            code: String::new(),
            key_code: 0,
            text: Some(c.to_string()),
            location: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_down_without_key_is_rejected() {
        let ev = InputEvent::empty(InputKind::KeyDown);
        assert!(matches!(ev.validate(), Err(DriverError::InvalidInput(_))));
    }

    #[test]
    fn mouse_without_coordinates_is_rejected() {
        let mut ev = InputEvent::mouse_down(1.0, 1.0, MouseButton::Left);
        ev.coordinates = None;
        assert!(ev.validate().is_err());
        assert!(InputEvent::empty(InputKind::Wheel).validate().is_err());
        assert!(InputEvent::wheel(0.0, 10.0).validate().is_ok());
    }

    #[test]
    fn combinations_split_on_plus() {
        assert_eq!(split_combination("Control+a").unwrap(), vec!["Control", "a"]);
        assert_eq!(split_combination("Shift+Control+ArrowLeft").unwrap().len(), 3);
        assert_eq!(split_combination("Control++").unwrap(), vec!["Control", "+"]);
        assert!(split_combination("Control+Bogus").is_err());
        assert!(split_combination("").is_err());
    }

    #[test]
    fn key_table_covers_letters_digits_and_named_keys() {
        assert_eq!(KeyDefinition::lookup("a").unwrap().code, "KeyA");
        assert_eq!(KeyDefinition::lookup("7").unwrap().key_code, 55);
        assert_eq!(KeyDefinition::lookup("Enter").unwrap().key_code, 13);
        assert_eq!(KeyDefinition::lookup("F5").unwrap().key_code, 116);
        assert!(KeyDefinition::lookup("NotAKey").is_none());
    }

    #[test]
    fn control_suppresses_text_on_key_down() {
        let ev = InputEvent::key_down("a").with_modifiers(MOD_CONTROL);
        let (_, params) = ev.to_protocol((0.0, 0.0)).unwrap();
        assert_eq!(params["type"], "rawKeyDown");
        let (_, params) = InputEvent::key_down("a").to_protocol((0.0, 0.0)).unwrap();
        assert_eq!(params["type"], "keyDown");
        assert_eq!(params["text"], "a");
    }
}
