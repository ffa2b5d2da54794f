//! Execution accuracy: does the predicted query return the gold result?

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{execute_sql, Cell, ExecutionLimits, ExecutionResult};
use crate::sqllex::has_top_level_order_by;

/// Relative tolerance for comparing floating-point cells.
pub const REAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExOutcome {
    pub ex: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccuracyError {
    #[error("gold query failed: {0}")]
    GoldExecutionFailed(String),
}

/// Runs both queries without a row cap and compares their results. Rows are
/// compared as multisets unless the gold query orders its output at the top
/// level.
pub fn execution_accuracy(pred_sql: &str, gold_sql: &str, db_path: &Path) -> Result<ExOutcome, AccuracyError> {
    let limits = ExecutionLimits::uncapped();
    let gold = execute_sql(db_path, gold_sql, &limits);
    if let Some(err) = &gold.error {
        return Err(AccuracyError::GoldExecutionFailed(format!("{}: {}", err.kind, err.message)));
    }
    let pred = execute_sql(db_path, pred_sql, &limits);
    if let Some(err) = &pred.error {
        return Ok(ExOutcome {
            ex: false,
            detail: format!("prediction failed: {}: {}", err.kind, err.message),
        });
    }
    let ordered = has_top_level_order_by(gold_sql).unwrap_or(false);
    Ok(compare_results(&pred, &gold, ordered))
}

pub fn compare_results(pred: &ExecutionResult, gold: &ExecutionResult, ordered: bool) -> ExOutcome {
    let outcome = |ex: bool, detail: String| ExOutcome { ex, detail };
    if pred.rows.len() != gold.rows.len() {
        return outcome(false, format!("row count {} vs gold {}", pred.rows.len(), gold.rows.len()));
    }
    if pred.columns.len() != gold.columns.len() {
        return outcome(
            false,
            format!("column count {} vs gold {}", pred.columns.len(), gold.columns.len()),
        );
    }
    let same = if ordered {
        pred.rows.iter().zip(&gold.rows).all(|(a, b)| rows_equal(a, b))
    } else {
        multiset_equal(&pred.rows, &gold.rows)
    };
    if same {
        outcome(true, "match".to_string())
    } else if ordered {
        outcome(false, "rows differ or are in a different order".to_string())
    } else {
        outcome(false, "rows differ".to_string())
    }
}

fn as_f64(cell: &Cell) -> Option<f64> {
    match cell {
        Cell::Integer(i) => Some(*i as f64),
        Cell::Real(r) => Some(*r),
        _ => None,
    }
}

pub fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Null, Cell::Null) => true,
        (Cell::Integer(x), Cell::Integer(y)) => x == y,
        (Cell::Text(x), Cell::Text(y)) => x == y,
        (Cell::Blob(x), Cell::Blob(y)) => x == y,
        (Cell::Real(_), Cell::Real(_) | Cell::Integer(_)) | (Cell::Integer(_), Cell::Real(_)) => {
            let (x, y) = (as_f64(a).unwrap_or(f64::NAN), as_f64(b).unwrap_or(f64::NAN));
            x == y || (x - y).abs() <= REAL_TOLERANCE * x.abs().max(y.abs())
        }
        _ => false,
    }
}

fn rows_equal(a: &[Cell], b: &[Cell]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_equal(x, y))
}

fn rank(cell: &Cell) -> u8 {
    match cell {
        Cell::Null => 0,
        Cell::Integer(_) | Cell::Real(_) => 1,
        Cell::Text(_) => 2,
        Cell::Blob(_) => 3,
    }
}

fn cmp_cells(a: &Cell, b: &Cell) -> Ordering {
    rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
        (Cell::Text(x), Cell::Text(y)) => x.cmp(y),
        (Cell::Blob(x), Cell::Blob(y)) => x.cmp(y),
        _ => match (as_f64(a), as_f64(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => Ordering::Equal,
        },
    })
}

fn cmp_rows(a: &[Cell], b: &[Cell]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| cmp_cells(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn multiset_equal(pred: &[Vec<Cell>], gold: &[Vec<Cell>]) -> bool {
    let mut p: Vec<&Vec<Cell>> = pred.iter().collect();
    let mut g: Vec<&Vec<Cell>> = gold.iter().collect();
    p.sort_by(|a, b| cmp_rows(a, b));
    g.sort_by(|a, b| cmp_rows(a, b));
    if p.iter().zip(&g).all(|(a, b)| rows_equal(a, b)) {
        return true;
    }
    // Sorting can separate rows whose reals differ only within tolerance;
    // fall back to pairing each row with any unused equal row.
    let has_real = gold.iter().chain(pred).flatten().any(|c| matches!(c, Cell::Real(_)));
    if !has_real {
        return false;
    }
    let mut used = vec![false; g.len()];
    p.iter().all(|row| {
        match (0..g.len()).find(|&j| !used[j] && rows_equal(row, g[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}
