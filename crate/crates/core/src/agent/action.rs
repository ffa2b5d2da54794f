//! The closed action set and the `Thought: … / Action: Name(args)` grammar.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolAction {
    SearchColumn {
        semantic: String,
    },
    SearchValue {
        value: String,
        table: Option<String>,
        column: Option<String>,
    },
    FindShortestPath {
        start: String,
        end: String,
    },
    ExecuteSql {
        sql: String,
    },
    Done {
        sql: Option<String>,
    },
}

impl ToolAction {
    pub fn name(&self) -> &'static str {
        match self {
            ToolAction::SearchColumn { .. } => "SearchColumn",
            ToolAction::SearchValue { .. } => "SearchValue",
            ToolAction::FindShortestPath { .. } => "FindShortestPath",
            ToolAction::ExecuteSql { .. } => "ExecuteSQL",
            ToolAction::Done { .. } => "Done",
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self, ToolAction::Done { .. })
    }
}

fn quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for ToolAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args = match self {
            ToolAction::SearchColumn { semantic } => quoted(semantic),
            ToolAction::SearchValue {
                value,
                table,
                column,
            } => {
                let mut parts = vec![quoted(value)];
                if let Some(t) = table {
                    parts.push(format!("table={}", quoted(t)));
                }
                if let Some(c) = column {
                    parts.push(format!("column={}", quoted(c)));
                }
                parts.join(", ")
            }
            ToolAction::FindShortestPath { start, end } => {
                format!("{}, {}", quoted(start), quoted(end))
            }
            ToolAction::ExecuteSql { sql } => quoted(sql),
            ToolAction::Done { sql } => sql.as_deref().map(quoted).unwrap_or_default(),
        };
        write!(f, "{}({args})", self.name())
    }
}

impl Serialize for ToolAction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ToolAction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_call(&text).map_err(|e| serde::de::Error::custom(e.reason))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{reason}")]
pub struct ParseFailure {
    /// Single-line explanation, shown to the model as the next observation.
    pub reason: String,
}

fn fail<T>(reason: impl Into<String>) -> Result<T, ParseFailure> {
    Err(ParseFailure {
        reason: reason.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAction {
    pub thought: String,
    pub action: ToolAction,
}

/// Parses one model output: optional thought text, then exactly one
/// `Action:` line whose call may continue over further lines.
pub fn parse_action(output: &str) -> Result<ParsedAction, ParseFailure> {
    let mut offset = 0;
    let mut action_at = None;
    for line in output.split_inclusive('\n') {
        if line.trim_start().starts_with("Action:") {
            let indent = line.len() - line.trim_start().len();
            action_at = Some(offset + indent);
            break;
        }
        offset += line.len();
    }
    let Some(at) = action_at else {
        return fail("no line starting with \"Action:\"");
    };
    let before = output[..at].trim();
    let thought = before
        .strip_prefix("Thought:")
        .map_or(before, str::trim_start)
        .to_string();
    let action = parse_call(output[at + "Action:".len()..].trim())?;
    Ok(ParsedAction { thought, action })
}

#[derive(Debug, PartialEq)]
enum Arg {
    Positional(String),
    Keyword(String, Option<String>),
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn string(&mut self) -> Result<String, ParseFailure> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return fail("unterminated string argument"),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        None => return fail("unterminated string argument"),
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some(c @ ('"' | '\\')) => out.push(c),
                        Some(c) => {
                            out.push('\\');
                            out.push(c);
                        }
                    }
                    self.pos += 1;
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

/// Parses `Name(arg, …)` with nothing but whitespace after the closing
/// parenthesis.
fn parse_call(text: &str) -> Result<ToolAction, ParseFailure> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    let name = cur.ident();
    if name.is_empty() {
        return fail("expected an action name after \"Action:\"");
    }
    if !matches!(
        name.as_str(),
        "SearchColumn" | "SearchValue" | "FindShortestPath" | "ExecuteSQL" | "Done"
    ) {
        return fail(format!("unknown action {name}"));
    }
    cur.skip_ws();
    if cur.peek() != Some('(') {
        return fail(format!("expected \"(\" after {name}"));
    }
    cur.pos += 1;

    let mut args = Vec::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.pos += 1;
    } else {
        loop {
            cur.skip_ws();
            let arg = match cur.peek() {
                Some('"') => Arg::Positional(cur.string()?),
                Some(c) if c.is_alphabetic() || c == '_' => {
                    let key = cur.ident();
                    cur.skip_ws();
                    if cur.peek() != Some('=') {
                        return fail(format!(
                            "argument {key} must be a double-quoted string or key=\"value\""
                        ));
                    }
                    cur.pos += 1;
                    cur.skip_ws();
                    match cur.peek() {
                        Some('"') => Arg::Keyword(key, Some(cur.string()?)),
                        _ if cur.ident() == "None" => Arg::Keyword(key, None),
                        _ => return fail(format!("value of {key} must be a double-quoted string or None")),
                    }
                }
                Some(c) => return fail(format!("unexpected character {c:?} in arguments of {name}")),
                None => return fail(format!("missing \")\" after arguments of {name}")),
            };
            args.push(arg);
            cur.skip_ws();
            match cur.peek() {
                Some(',') => cur.pos += 1,
                Some(')') => {
                    cur.pos += 1;
                    break;
                }
                Some(c) => return fail(format!("expected \",\" or \")\" in arguments of {name}, found {c:?}")),
                None => return fail(format!("missing \")\" after arguments of {name}")),
            }
        }
    }
    cur.skip_ws();
    if cur.pos < cur.chars.len() {
        return fail(format!("unexpected text after {name}(...); emit exactly one action"));
    }
    bind(&name, args)
}

/// Assigns arguments to the tool's parameters and checks arity.
fn bind(name: &str, args: Vec<Arg>) -> Result<ToolAction, ParseFailure> {
    let (params, required): (&[&str], usize) = match name {
        "SearchColumn" => (&["semantic"], 1),
        "SearchValue" => (&["value", "table", "column"], 1),
        "FindShortestPath" => (&["start", "end"], 2),
        "ExecuteSQL" => (&["sql"], 1),
        _ => (&["sql"], 0),
    };
    let mut slots: Vec<Option<Option<String>>> = vec![None; params.len()];
    let mut next = 0;
    let mut seen_keyword = false;
    for arg in args {
        match arg {
            Arg::Positional(v) => {
                if seen_keyword {
                    return fail(format!("positional argument after keyword argument in {name}"));
                }
                if next >= params.len() {
                    return fail(format!("{name} takes at most {} argument(s)", params.len()));
                }
                slots[next] = Some(Some(v));
                next += 1;
            }
            Arg::Keyword(key, v) => {
                seen_keyword = true;
                let Some(i) = params.iter().position(|p| *p == key) else {
                    return fail(format!("{name} has no parameter named {key}"));
                };
                if slots[i].is_some() {
                    return fail(format!("{name} got parameter {key} twice"));
                }
                slots[i] = Some(v);
            }
        }
    }
    for (i, param) in params.iter().enumerate().take(required) {
        if !matches!(slots[i], Some(Some(_))) {
            return fail(format!("{name} requires a string argument {param}"));
        }
    }
    let mut vals = slots.into_iter().map(Option::flatten);
    let mut take = || vals.next().flatten();
    Ok(match name {
        "SearchColumn" => ToolAction::SearchColumn { semantic: take().unwrap_or_default() },
        "SearchValue" => ToolAction::SearchValue {
            value: take().unwrap_or_default(),
            table: take(),
            column: take(),
        },
        "FindShortestPath" => ToolAction::FindShortestPath {
            start: take().unwrap_or_default(),
            end: take().unwrap_or_default(),
        },
        "ExecuteSQL" => ToolAction::ExecuteSql { sql: take().unwrap_or_default() },
        _ => ToolAction::Done { sql: take() },
    })
}
