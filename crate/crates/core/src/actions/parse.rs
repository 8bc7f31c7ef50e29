//! Parser and renderer for the action call grammar.

use std::fmt;

use super::{ActionCall, ActionCatalog, ArgValue, ParamKind, PrimitiveSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Empty,
    Syntax { line: String, message: String },
    UnknownAction { name: String, line: String, known: Vec<String> },
    Arity { line: String, signature: String, got: usize },
    Kind { line: String, param: String, expected: String },
    MultipleActions { count: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Empty => write!(f, "no action found: write exactly one call such as noop()"),
            ParseError::Syntax { line, message } => {
                write!(f, "could not parse {line:?}: {message}")
            }
            ParseError::UnknownAction { name, line, known } => write!(
                f,
                "unknown action {name:?} in {line:?}; available actions: {}",
                known.join(", ")
            ),
            ParseError::Arity { line, signature, got } => write!(
                f,
                "wrong number of arguments in {line:?}: got {got}, signature is {signature}"
            ),
            ParseError::Kind { line, param, expected } => {
                write!(f, "bad argument {param} in {line:?}: expected {expected}")
            }
            ParseError::MultipleActions { count } => write!(
                f,
                "multiple actions not allowed: found {count} calls, but only one action per step is accepted"
            ),
        }
    }
}

impl std::error::Error for ParseError {}

/// Strip a surrounding fenced block. Fences only count at the start of a
/// line, so backticks inside string arguments are left alone. Text outside
/// the first fence pair is ignored.
fn strip_fence(text: &str) -> String {
    let mut lines = text.lines();
    let Some(open) = lines.by_ref().find(|l| l.trim_start().starts_with("```")) else {
        return text.to_string();
    };
    let mut body = Vec::new();
    // Calls may follow the opening fence on the same line; anything else there is an info string.
    let rest = &open.trim_start()[3..];
    if rest.contains('(') {
        match rest.trim_end().strip_suffix("```") {
            Some(inline) => return inline.to_string(),
            None => body.push(rest),
        }
    }
    for line in lines {
        if line.trim_start().starts_with("```") {
            break;
        }
        body.push(line);
    }
    body.join("\n")
}

/// Parse agent output into calls, validating them against the catalog.
pub fn parse(text: &str, catalog: &ActionCatalog) -> Result<Vec<ActionCall>, ParseError> {
    let body = strip_fence(text);
    let body = body.as_str();
    let mut calls = Vec::new();
    for raw in body.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let call = parse_line(line)?;
        let spec = catalog
            .get(&call.name)
            .ok_or_else(|| ParseError::UnknownAction {
                name: call.name.clone(),
                line: line.to_string(),
                known: catalog.names().into_iter().map(str::to_string).collect(),
            })?;
        calls.push(check_call(call, spec, line)?);
    }
    if calls.is_empty() {
        return Err(ParseError::Empty);
    }
    if !catalog.multi_actions && calls.len() > 1 {
        return Err(ParseError::MultipleActions { count: calls.len() });
    }
    Ok(calls)
}

fn check_call(mut call: ActionCall, spec: &PrimitiveSpec, line: &str) -> Result<ActionCall, ParseError> {
    let n = call.args.len();
    if n < spec.required_arity() || n > spec.params.len() {
        return Err(ParseError::Arity {
            line: line.to_string(),
            signature: spec.signature(),
            got: n,
        });
    }
    for (arg, param) in call.args.iter_mut().zip(&spec.params) {
        let bad = || ParseError::Kind {
            line: line.to_string(),
            param: param.name.to_string(),
            expected: param.kind.describe().to_string(),
        };
        match (param.kind, &*arg) {
            (ParamKind::Bid, ArgValue::Num(v)) if v.fract() == 0.0 && *v >= 0.0 => {
                *arg = ArgValue::Str(format!("{}", *v as u64));
            }
            (ParamKind::Bid | ParamKind::Text | ParamKind::Key, ArgValue::Str(_)) => {}
            (ParamKind::Number, ArgValue::Num(_)) => {}
            (ParamKind::Index, ArgValue::Num(v)) if v.fract() == 0.0 && *v >= 0.0 => {}
            (ParamKind::Button, ArgValue::Str(s)) if matches!(s.as_str(), "left" | "middle" | "right") => {}
            (ParamKind::Options, ArgValue::Str(_) | ArgValue::List(_)) => {}
            _ => return Err(bad()),
        }
    }
    Ok(call)
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str) -> Self {
        Self {
            chars: line.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: self.line.to_string(),
            message: message.into(),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(self.error(format!("expected '{want}' but found '{c}'"))),
            None => Err(self.error(format!("expected '{want}' but the line ended"))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        if start == self.pos || self.chars[start].is_ascii_digit() {
            return Err(self.error("expected an action name such as click(...)"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let quote = self.bump().expect("caller checked for a quote");
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some(c) => out.push(c),
                    None => return Err(self.error("unterminated string")),
                },
                Some(c) if c == quote => return Ok(out),
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let digits = |c: &mut Self| {
            let s = c.pos;
            while c.peek().is_some_and(|ch| ch.is_ascii_digit()) {
                c.pos += 1;
            }
            c.pos > s
        };
        if !digits(self) {
            return Err(self.error("malformed number"));
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            if !digits(self) {
                return Err(self.error("malformed number"));
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| self.error("malformed number"))
    }

    fn value(&mut self) -> Result<ArgValue, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('"') | Some('\'') => Ok(ArgValue::Str(self.string()?)),
            Some(c) if c == '-' || c.is_ascii_digit() => Ok(ArgValue::Num(self.number()?)),
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(']') => {
                            self.pos += 1;
                            return Ok(ArgValue::List(items));
                        }
                        Some('"') | Some('\'') => items.push(self.string()?),
                        _ => return Err(self.error("lists may only hold quoted strings")),
                    }
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(']') => {}
                        _ => return Err(self.error("expected ',' or ']' in list")),
                    }
                }
            }
            Some(c) => Err(self.error(format!(
                "unexpected '{c}': arguments must be quoted strings, numbers or lists of strings"
            ))),
            None => Err(self.error("missing ')'")),
        }
    }
}

fn parse_line(line: &str) -> Result<ActionCall, ParseError> {
    let mut cur = Cursor::new(line);
    let name = cur.ident()?;
    cur.expect('(')?;
    let mut args = Vec::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.pos += 1;
    } else {
        loop {
            args.push(cur.value()?);
            cur.skip_ws();
            match cur.bump() {
                Some(',') => {
                    cur.skip_ws();
                    if cur.peek() == Some(')') {
                        cur.pos += 1;
                        break;
                    }
                }
                Some(')') => break,
                Some(c) => return Err(cur.error(format!("expected ',' or ')' but found '{c}'"))),
                None => return Err(cur.error("missing ')'")),
            }
        }
    }
    cur.skip_ws();
    if cur.peek().is_some() {
        return Err(cur.error("unexpected text after the call; write one call per line"));
    }
    Ok(ActionCall { name, args })
}

fn render_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn render_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // Shortest representation that reads back to the same value.
        format!("{v}")
    }
}

/// Render calls in the grammar, one per line; `parse(render(calls))` returns `calls`.
pub fn render(calls: &[ActionCall]) -> String {
    calls
        .iter()
        .map(|call| {
            let args: Vec<String> = call
                .args
                .iter()
                .map(|a| match a {
                    ArgValue::Str(s) => render_string(s),
                    ArgValue::Num(n) => render_number(*n),
                    ArgValue::List(items) => format!(
                        "[{}]",
                        items.iter().map(|s| render_string(s)).collect::<Vec<_>>().join(", ")
                    ),
                })
                .collect();
            format!("{}({})", call.name, args.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
