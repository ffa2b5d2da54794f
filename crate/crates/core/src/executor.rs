//! Read-only SQL execution with a timeout, a row cap and bounded text output.
//!
//! Statements run on a connection opened with `SQLITE_OPEN_READ_ONLY` and
//! `query_only`, guarded by an authorizer that rejects every action other
//! than reading. A progress handler interrupts queries that exceed the
//! timeout.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rusqlite::hooks::{AuthAction, AuthContext, Authorization};
use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::open_read_only;

/// Rows past the cap are still counted, up to this many in total.
pub const ROW_COUNT_LIMIT: u64 = 10_000;

const TRUNCATION_MARKER: &str = "\n[observation truncated]";

/// Pragmas that only report information even when given an argument.
const READ_PRAGMAS: &[&str] = &[
    "table_info",
    "table_xinfo",
    "table_list",
    "index_list",
    "index_info",
    "index_xinfo",
    "foreign_key_list",
    "database_list",
    "collation_list",
    "function_list",
    "pragma_list",
    "module_list",
    "compile_options",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub timeout_ms: u64,
    pub row_cap: usize,
    pub observation_char_cap: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits {
            timeout_ms: 30_000,
            row_cap: 20,
            observation_char_cap: 2_000,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("execution limits must be positive")]
pub struct InvalidLimits;

impl ExecutionLimits {
    /// Limits for result comparison: every row is materialized.
    pub fn uncapped() -> Self {
        ExecutionLimits {
            row_cap: usize::MAX,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), InvalidLimits> {
        if self.timeout_ms == 0 || self.row_cap == 0 || self.observation_char_cap == 0 {
            Err(InvalidLimits)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn from_ref(value: ValueRef<'_>) -> Self {
        match value {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(r) => Cell::Real(r),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Integer(i) => write!(f, "{i}"),
            Cell::Real(r) => write!(f, "{r}"),
            Cell::Text(t) => f.write_str(t),
            Cell::Blob(b) => write!(f, "<blob {} bytes>", b.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecErrorKind {
    SyntaxError,
    SemanticError,
    Timeout,
    WriteAttempted,
    DatabaseUnavailable,
}

impl fmt::Display for ExecErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub message: String,
}

/// Row count of a result; counting stops at [`ROW_COUNT_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowCount {
    Exact(u64),
    AtLeast(u64),
}

impl RowCount {
    pub fn lower_bound(self) -> u64 {
        match self {
            RowCount::Exact(n) | RowCount::AtLeast(n) => n,
        }
    }
}

impl fmt::Display for RowCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowCount::Exact(n) => write!(f, "{n}"),
            RowCount::AtLeast(n) => write!(f, "≥ {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub total_row_count: RowCount,
    pub truncated: bool,
    pub elapsed_ms: u64,
    pub error: Option<ExecError>,
}

impl ExecutionResult {
    fn failed(kind: ExecErrorKind, message: impl Into<String>, elapsed: Duration) -> Self {
        ExecutionResult {
            columns: Vec::new(),
            rows: Vec::new(),
            total_row_count: RowCount::Exact(0),
            truncated: false,
            elapsed_ms: elapsed.as_millis() as u64,
            error: Some(ExecError {
                kind,
                message: message.into(),
            }),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Runs one read-only statement against the database file.
pub fn execute_sql(db_path: &Path, sql: &str, limits: &ExecutionLimits) -> ExecutionResult {
    let started = Instant::now();
    let conn = match open_read_only(db_path) {
        Ok(c) => c,
        Err(e) => {
            return ExecutionResult::failed(
                ExecErrorKind::DatabaseUnavailable,
                e.to_string(),
                started.elapsed(),
            )
        }
    };
    Executor::new(conn).run(sql, limits)
}

/// A sandboxed read-only connection that can run several statements in turn.
pub struct Executor {
    conn: Connection,
    write_denied: Arc<AtomicBool>,
}

impl Executor {
    pub fn open(db_path: &Path) -> Result<Self, ExecError> {
        open_read_only(db_path)
            .map(Executor::new)
            .map_err(|e| ExecError {
                kind: ExecErrorKind::DatabaseUnavailable,
                message: e.to_string(),
            })
    }

    fn new(conn: Connection) -> Self {
        let write_denied = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&write_denied);
        conn.authorizer(Some(move |ctx: AuthContext<'_>| {
            if is_read_action(&ctx.action) {
                Authorization::Allow
            } else {
                flag.store(true, Ordering::SeqCst);
                Authorization::Deny
            }
        }))
        .expect("authorizer installs on an owned connection");
        // query_only is belt and braces on top of the read-only open flag.
        let _ = conn.execute_batch("PRAGMA query_only = ON");
        Executor { conn, write_denied }
    }

    pub fn run(&self, sql: &str, limits: &ExecutionLimits) -> ExecutionResult {
        let started = Instant::now();
        self.write_denied.store(false, Ordering::SeqCst);
        if sql.trim().trim_end_matches(';').trim().is_empty() {
            return ExecutionResult::failed(
                ExecErrorKind::SyntaxError,
                "empty statement",
                started.elapsed(),
            );
        }

        let deadline = started + Duration::from_millis(limits.timeout_ms);
        let timed_out = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&timed_out);
        let _ = self.conn.progress_handler(
            1_000,
            Some(move || {
                if Instant::now() >= deadline {
                    flag.store(true, Ordering::SeqCst);
                    true
                } else {
                    false
                }
            }),
        );

        let result = self.run_inner(sql, limits, started, &timed_out);
        let _ = self.conn.progress_handler(0, None::<fn() -> bool>);
        result
    }

    fn run_inner(
        &self,
        sql: &str,
        limits: &ExecutionLimits,
        started: Instant,
        timed_out: &AtomicBool,
    ) -> ExecutionResult {
        let classify = |err: rusqlite::Error| -> ExecutionResult {
            let kind = if self.write_denied.load(Ordering::SeqCst) {
                ExecErrorKind::WriteAttempted
            } else if timed_out.load(Ordering::SeqCst) {
                ExecErrorKind::Timeout
            } else {
                classify_error(&err)
            };
            let message = match kind {
                ExecErrorKind::WriteAttempted => {
                    "statement would modify the database; only read queries are allowed".to_string()
                }
                ExecErrorKind::Timeout => {
                    format!("query exceeded the {} ms time limit", limits.timeout_ms)
                }
                _ => error_message(&err),
            };
            ExecutionResult::failed(kind, message, started.elapsed())
        };

        let mut stmt = match self.conn.prepare(sql) {
            Ok(s) => s,
            Err(e) => return classify(e),
        };
        if !stmt.readonly() {
            return ExecutionResult::failed(
                ExecErrorKind::WriteAttempted,
                "statement would modify the database; only read queries are allowed",
                started.elapsed(),
            );
        }
        let columns: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let width = columns.len();
        let mut rows_out = Vec::new();
        let mut total: u64 = 0;
        let mut exhausted = true;
        let mut rows = match stmt.query([]) {
            Ok(r) => r,
            Err(e) => return classify(e),
        };
        loop {
            match rows.next() {
                Ok(Some(row)) => {
                    total += 1;
                    if rows_out.len() < limits.row_cap {
                        let mut cells = Vec::with_capacity(width);
                        for i in 0..width {
                            match row.get_ref(i) {
                                Ok(v) => cells.push(Cell::from_ref(v)),
                                Err(e) => return classify(e),
                            }
                        }
                        rows_out.push(cells);
                    } else if total >= ROW_COUNT_LIMIT {
                        exhausted = matches!(rows.next(), Ok(None));
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => return classify(e),
            }
        }
        let total_row_count = if exhausted {
            RowCount::Exact(total)
        } else {
            RowCount::AtLeast(total)
        };
        ExecutionResult {
            columns,
            truncated: total > rows_out.len() as u64 || !exhausted,
            rows: rows_out,
            total_row_count,
            elapsed_ms: started.elapsed().as_millis() as u64,
            error: None,
        }
    }
}

fn is_read_action(action: &AuthAction<'_>) -> bool {
    match action {
        AuthAction::Select | AuthAction::Read { .. } | AuthAction::Function { .. } | AuthAction::Recursive => true,
        AuthAction::Pragma {
            pragma_name,
            pragma_value,
        } => {
            pragma_value.is_none()
                || READ_PRAGMAS
                    .iter()
                    .any(|p| p.eq_ignore_ascii_case(pragma_name))
        }
        _ => false,
    }
}

fn classify_error(err: &rusqlite::Error) -> ExecErrorKind {
    if let rusqlite::Error::MultipleStatement = err {
        return ExecErrorKind::SyntaxError;
    }
    if let Some(code) = err.sqlite_error_code() {
        match code {
            ErrorCode::ReadOnly => return ExecErrorKind::WriteAttempted,
            ErrorCode::OperationInterrupted => return ExecErrorKind::Timeout,
            _ => {}
        }
    }
    let message = error_message(err).to_lowercase();
    if message.contains("syntax error")
        || message.contains("incomplete input")
        || message.contains("unrecognized token")
    {
        ExecErrorKind::SyntaxError
    } else {
        ExecErrorKind::SemanticError
    }
}

/// The engine's own message, without rusqlite's wrapping.
fn error_message(err: &rusqlite::Error) -> String {
    match err {
        rusqlite::Error::SqliteFailure(_, Some(msg)) => msg.clone(),
        rusqlite::Error::SqlInputError { msg, .. } => msg.clone(),
        rusqlite::Error::MultipleStatement => {
            "only one statement can be executed at a time".to_string()
        }
        other => other.to_string(),
    }
}

/// Renders a result as compact text: a ` | `-separated header, the kept
/// rows, a row-count suffix when truncated, all within the character cap.
pub fn render_observation(result: &ExecutionResult, limits: &ExecutionLimits) -> String {
    let text = match &result.error {
        Some(err) => format!("Error: {}: {}", err.kind, err.message),
        None => {
            let mut lines = Vec::with_capacity(result.rows.len() + 2);
            lines.push(result.columns.join(" | "));
            for row in result.rows.iter().take(limits.row_cap) {
                lines.push(
                    row.iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(" | "),
                );
            }
            if result.rows.is_empty() {
                lines.push("(no rows)".to_string());
            }
            if result.truncated {
                lines.push(format!("... ({} rows total)", result.total_row_count));
            }
            lines.join("\n")
        }
    };
    cap_chars(&text, limits.observation_char_cap)
}

/// Truncates to at most `cap` characters, ending with a marker when cut.
pub fn cap_chars(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let marker_len = TRUNCATION_MARKER.chars().count();
    if cap <= marker_len {
        return TRUNCATION_MARKER.chars().skip(marker_len - cap).collect();
    }
    let mut out: String = text.chars().take(cap - marker_len).collect();
    out.push_str(TRUNCATION_MARKER);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(ddl: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.sqlite");
        Connection::open(&path).unwrap().execute_batch(ddl).unwrap();
        (dir, path)
    }

    fn hundred_rows() -> (tempfile::TempDir, std::path::PathBuf) {
        let mut ddl = String::from("CREATE TABLE t (id INTEGER, name TEXT);");
        for i in 0..100 {
            ddl.push_str(&format!("INSERT INTO t VALUES ({i}, 'n{i}');"));
        }
        fixture(&ddl)
    }

    #[test]
    fn select_one() {
        let (_d, path) = fixture("");
        let r = execute_sql(&path, "SELECT 1", &ExecutionLimits::default());
        assert_eq!(r.columns, ["1"]);
        assert_eq!(r.rows, vec![vec![Cell::Integer(1)]]);
        assert!(!r.truncated);
        assert_eq!(r.total_row_count, RowCount::Exact(1));
        assert_eq!(render_observation(&r, &ExecutionLimits::default()), "1\n1");
    }

    #[test]
    fn caps_rows_and_counts_the_rest() {
        let (_d, path) = hundred_rows();
        let limits = ExecutionLimits::default();
        let r = execute_sql(&path, "SELECT * FROM t", &limits);
        assert_eq!(r.rows.len(), 20);
        assert!(r.truncated);
        assert_eq!(r.total_row_count, RowCount::Exact(100));
        let text = render_observation(&r, &limits);
        assert!(text.ends_with("... (100 rows total)"), "{text}");
        assert!(text.starts_with("id | name\n0 | n0\n"));
    }

    #[test]
    fn counting_stops_at_the_limit() {
        let (_d, path) = fixture("");
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c LIMIT 20000) SELECT x FROM c";
        let r = execute_sql(&path, sql, &ExecutionLimits::default());
        assert_eq!(r.total_row_count, RowCount::AtLeast(ROW_COUNT_LIMIT));
        assert!(r.truncated);
        assert!(render_observation(&r, &ExecutionLimits::default()).ends_with("(≥ 10000 rows total)"));
    }

    #[test]
    fn syntax_and_semantic_errors_keep_engine_messages() {
        let (_d, path) = fixture("CREATE TABLE t (a INTEGER);");
        let limits = ExecutionLimits::default();
        let r = execute_sql(&path, "SELEC 1", &limits);
        let err = r.error.clone().unwrap();
        assert_eq!(err.kind, ExecErrorKind::SyntaxError);
        assert!(err.message.contains("near \"SELEC\""), "{}", err.message);
        assert!(r.rows.is_empty());
        assert!(render_observation(&r, &limits).starts_with("Error: SyntaxError: near"));

        let r = execute_sql(&path, "SELECT b FROM t", &limits);
        let err = r.error.unwrap();
        assert_eq!(err.kind, ExecErrorKind::SemanticError);
        assert_eq!(err.message, "no such column: b");
    }

    #[test]
    fn empty_and_multiple_statements_are_rejected() {
        let (_d, path) = fixture("");
        let limits = ExecutionLimits::default();
        assert_eq!(
            execute_sql(&path, " ; ", &limits).error.unwrap().kind,
            ExecErrorKind::SyntaxError
        );
        assert_eq!(
            execute_sql(&path, "SELECT 1; SELECT 2", &limits).error.unwrap().kind,
            ExecErrorKind::SyntaxError
        );
        assert!(execute_sql(&path, "SELECT 1;", &limits).is_ok());
    }

    #[test]
    fn writes_are_refused() {
        let (_d, path) = fixture("CREATE TABLE t (a INTEGER); INSERT INTO t VALUES (1);");
        let before = std::fs::read(&path).unwrap();
        for sql in [
            "INSERT INTO t VALUES (2)",
            "DROP TABLE t",
            "PRAGMA user_version = 3",
            "PRAGMA journal_mode = WAL",
            "ATTACH DATABASE 'x.db' AS x",
            "BEGIN",
        ] {
            let r = execute_sql(&path, sql, &ExecutionLimits::default());
            assert_eq!(
                r.error.as_ref().map(|e| e.kind),
                Some(ExecErrorKind::WriteAttempted),
                "{sql}: {r:?}"
            );
        }
        assert_eq!(std::fs::read(&path).unwrap(), before);
        let r = execute_sql(&path, "PRAGMA table_info(t)", &ExecutionLimits::default());
        assert!(r.is_ok(), "{r:?}");
    }

    #[test]
    fn slow_queries_time_out() {
        let (_d, path) = fixture("");
        let limits = ExecutionLimits {
            timeout_ms: 200,
            ..ExecutionLimits::default()
        };
        let started = Instant::now();
        let r = execute_sql(
            &path,
            "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c",
            &limits,
        );
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::Timeout);
        assert!(started.elapsed() < Duration::from_millis(400));
    }

    #[test]
    fn missing_database_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let r = execute_sql(&dir.path().join("none.sqlite"), "SELECT 1", &ExecutionLimits::default());
        assert_eq!(r.error.unwrap().kind, ExecErrorKind::DatabaseUnavailable);
        assert!(!dir.path().join("none.sqlite").exists());
    }

    #[test]
    fn zero_rows_and_limit_validation() {
        let (_d, path) = fixture("CREATE TABLE t (a INTEGER);");
        let r = execute_sql(&path, "SELECT a FROM t", &ExecutionLimits::default());
        assert_eq!(render_observation(&r, &ExecutionLimits::default()), "a\n(no rows)");
        assert!(ExecutionLimits { row_cap: 0, ..Default::default() }.validate().is_err());
        assert!(ExecutionLimits::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn observation_respects_char_cap(
            width in 1usize..12,
            rows in prop::collection::vec(prop::collection::vec(".{0,80}", 12), 0..60),
            cap in 1usize..3000,
            row_cap in 1usize..50,
        ) {
            let limits = ExecutionLimits { timeout_ms: 1, row_cap, observation_char_cap: cap };
            let rows: Vec<Vec<Cell>> = rows
                .into_iter()
                .take(row_cap)
                .map(|r| r.into_iter().take(width).map(Cell::Text).collect())
                .collect();
            let result = ExecutionResult {
                columns: (0..width).map(|i| format!("column_{i}")).collect(),
                total_row_count: RowCount::Exact(rows.len() as u64 + 5),
                truncated: true,
                rows,
                elapsed_ms: 0,
                error: None,
            };
            prop_assert!(render_observation(&result, &limits).chars().count() <= cap);
        }
    }
}
