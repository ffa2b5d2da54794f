//! Dataset difficulty statistics: value-constraint rates, the distribution of
//! tables per gold query, and schema size.

use serde::{Deserialize, Serialize};

use super::dataset::EvalItem;
use crate::catalog::DatabaseSchema;
use crate::sqllex::{comparison_literals, contains_keyword, referenced_tables, Literal};
use crate::tokenizer::Tokenizer;

/// A percentage with the counts it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub percent: f64,
    pub numerator: usize,
    pub denominator: usize,
}

impl Rate {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        let percent = if denominator == 0 {
            0.0
        } else {
            100.0 * numerator as f64 / denominator as f64
        };
        Rate {
            percent,
            numerator,
            denominator,
        }
    }

    /// True when there was nothing to measure; `percent` is then 0.
    pub fn is_empty(&self) -> bool {
        self.denominator == 0
    }
}

/// Whether the gold query constrains values, i.e. has a `WHERE` outside
/// string literals and comments.
pub fn has_value_constraint(gold_sql: &str) -> bool {
    contains_keyword(gold_sql, "WHERE").unwrap_or_else(|_| {
        // Unbalanced quotes: fall back to a plain word search.
        gold_sql
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .any(|w| w.eq_ignore_ascii_case("WHERE"))
    })
}

pub fn compute_cvr(items: &[EvalItem]) -> Rate {
    if items.is_empty() {
        log::warn!("value constraint rate requested for an empty item set");
    }
    Rate::new(
        items.iter().filter(|i| has_value_constraint(&i.gold_sql)).count(),
        items.len(),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageMode {
    /// Every literal must appear in the question.
    #[default]
    All,
    /// At least one literal must appear.
    Any,
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn question_tokens(question: &str) -> Vec<String> {
    question
        .split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric() && c != '-')
                .trim_end_matches('-')
                .replace(',', "")
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn number_matches(token: &str, literal: &str) -> bool {
    if token == literal {
        return true;
    }
    match (token.parse::<f64>(), literal.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Whether one literal is stated in the question. Text literals must occur
/// as a case- and whitespace-insensitive substring (with `LIKE` wildcards
/// stripped from the ends); numbers must occur as a token.
pub fn literal_covered(question: &str, literal: &Literal) -> bool {
    match literal {
        Literal::Text(text) => {
            let needle = normalize(text.trim_matches('%'));
            needle.is_empty() || normalize(question).contains(&needle)
        }
        Literal::Number(n) => question_tokens(question)
            .iter()
            .any(|t| number_matches(t, &n.to_lowercase())),
    }
}

/// Whether an item's constraint values appear in its question. Items whose
/// gold query yields no literals are not covered.
pub fn item_covered(item: &EvalItem, mode: CoverageMode) -> bool {
    let Ok(literals) = comparison_literals(&item.gold_sql) else {
        return false;
    };
    if literals.is_empty() {
        return false;
    }
    let mut hits = literals.iter().map(|l| literal_covered(&item.question, l));
    match mode {
        CoverageMode::All => hits.all(|h| h),
        CoverageMode::Any => hits.any(|h| h),
    }
}

/// Share of value-constrained items whose literals appear in the question.
pub fn compute_cvcr(items: &[EvalItem], mode: CoverageMode) -> Rate {
    let constrained: Vec<&EvalItem> = items.iter().filter(|i| has_value_constraint(&i.gold_sql)).collect();
    Rate::new(
        constrained.iter().filter(|i| item_covered(i, mode)).count(),
        constrained.len(),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinDistribution {
    pub one: usize,
    pub two: usize,
    pub three: usize,
    pub four_plus: usize,
    /// Queries whose tables could not be determined.
    pub residual: usize,
    /// Mean table count over the non-residual items; 0 when there are none.
    pub average: f64,
}

impl JoinDistribution {
    pub fn total(&self) -> usize {
        self.one + self.two + self.three + self.four_plus + self.residual
    }
}

/// Distinct tables referenced by a query, or `None` when that cannot be
/// determined.
pub fn table_count(gold_sql: &str) -> Option<usize> {
    referenced_tables(gold_sql).ok().map(|t| t.len()).filter(|&n| n > 0)
}

pub fn join_distribution(items: &[EvalItem]) -> JoinDistribution {
    let mut dist = JoinDistribution::default();
    let mut sum = 0usize;
    for item in items {
        match table_count(&item.gold_sql) {
            None => {
                log::debug!("cannot count tables in {:?}", item.gold_sql);
                dist.residual += 1;
            }
            Some(n) => {
                sum += n;
                match n {
                    1 => dist.one += 1,
                    2 => dist.two += 1,
                    3 => dist.three += 1,
                    _ => dist.four_plus += 1,
                }
            }
        }
    }
    let counted = items.len() - dist.residual;
    if counted > 0 {
        dist.average = sum as f64 / counted as f64;
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaStats {
    pub databases: usize,
    pub tb_per_db: f64,
    /// Total columns over total tables.
    pub col_per_tb: f64,
    pub fk_per_db: f64,
    /// Tokens of the DDL rendering per database; depends on the tokenizer.
    pub stk_per_db: f64,
    pub tokenizer: String,
}

pub fn schema_stats(schemas: &[DatabaseSchema], tokenizer: &dyn Tokenizer) -> SchemaStats {
    let n = schemas.len();
    if n == 0 {
        log::warn!("schema statistics requested for an empty database set");
    }
    let tables: usize = schemas.iter().map(|s| s.tables.len()).sum();
    let columns: usize = schemas.iter().map(DatabaseSchema::column_count).sum();
    let fks: usize = schemas.iter().map(|s| s.relations.len()).sum();
    let tokens: usize = schemas.iter().map(|s| tokenizer.count(&s.to_ddl())).sum();
    let per = |x: usize, d: usize| if d == 0 { 0.0 } else { x as f64 / d as f64 };
    SchemaStats {
        databases: n,
        tb_per_db: per(tables, n),
        col_per_tb: per(columns, tables),
        fk_per_db: per(fks, n),
        stk_per_db: per(tokens, n),
        tokenizer: tokenizer.name().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyStats {
    pub cvr: Rate,
    pub cvcr: Rate,
    pub coverage_mode: CoverageMode,
    pub joins: JoinDistribution,
    pub schema: Option<SchemaStats>,
}

pub fn difficulty_stats(items: &[EvalItem], mode: CoverageMode, schema: Option<SchemaStats>) -> DifficultyStats {
    DifficultyStats {
        cvr: compute_cvr(items),
        cvcr: compute_cvcr(items, mode),
        coverage_mode: mode,
        joins: join_distribution(items),
        schema,
    }
}
