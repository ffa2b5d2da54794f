//! Semantic column search: every column is rendered to a short sentence,
//! embedded once, and ranked against a query phrase by cosine similarity.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{self, CacheError};
use crate::catalog::{ColumnDef, ColumnProfile, ColumnStatistics, DatabaseSchema};
use crate::embedding::{EmbedError, EmbeddingProvider};

const HEADER: &str = "SQLAGENT column-index v1";

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum ColumnIndexError {
    #[error("embedding provider failed: {0}")]
    EmbedderFailure(#[from] EmbedError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no profile supplied for column {table}.{column}")]
    MissingProfile { table: String, column: String },
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Text embedded for a column.
pub fn render_column_text(column: &ColumnDef) -> String {
    match &column.description {
        Some(desc) => format!(
            "a column named {} in table {} about {}",
            column.name, column.table, desc
        ),
        None => format!("a column named {} in table {}", column.name, column.table),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub column: ColumnDef,
    pub text: String,
    pub vector: Vec<f32>,
    pub profile: ColumnProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnIndex {
    pub db_id: String,
    /// Name of the provider that produced the vectors.
    pub embedder: String,
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnHit {
    pub column_name: String,
    pub table_name: String,
    pub column_type: String,
    pub column_desc: Option<String>,
    pub column_statistics: ColumnStatistics,
    pub score: f64,
}

impl ColumnIndex {
    pub fn build(
        schema: &DatabaseSchema,
        profiles: &[ColumnProfile],
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, ColumnIndexError> {
        let by_column: HashMap<(String, String), &ColumnProfile> = profiles
            .iter()
            .map(|p| {
                (
                    (p.column.table.to_lowercase(), p.column.name.to_lowercase()),
                    p,
                )
            })
            .collect();

        let columns: Vec<&ColumnDef> = schema.columns().collect();
        let texts: Vec<String> = columns.iter().map(|c| render_column_text(c)).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embedder.embed(&texts)?
        };
        if vectors.len() != texts.len() {
            return Err(ColumnIndexError::DimensionMismatch(format!(
                "embedder returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().position(|v| v.len() != dim) {
            return Err(ColumnIndexError::DimensionMismatch(format!(
                "vector {bad} has dimension {}, expected {dim}",
                vectors[bad].len()
            )));
        }
        if vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(ColumnIndexError::DimensionMismatch(
                "embedder returned non-finite components".into(),
            ));
        }

        let mut entries = Vec::with_capacity(columns.len());
        for ((column, text), vector) in columns.into_iter().zip(texts).zip(vectors) {
            let key = (column.table.to_lowercase(), column.name.to_lowercase());
            let profile = by_column
                .get(&key)
                .ok_or_else(|| ColumnIndexError::MissingProfile {
                    table: column.table.clone(),
                    column: column.name.clone(),
                })?;
            entries.push(IndexEntry {
                column: column.clone(),
                text,
                vector,
                profile: (*profile).clone(),
            });
        }
        Ok(ColumnIndex {
            db_id: schema.db_id.clone(),
            embedder: embedder.name(),
            dim,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` columns by cosine similarity to `semantic`, which is embedded
    /// verbatim. Ties are ordered by (table, column).
    pub fn search(
        &self,
        embedder: &dyn EmbeddingProvider,
        semantic: &str,
        k: usize,
    ) -> Result<Vec<ColumnHit>, ColumnIndexError> {
        if semantic.trim().is_empty() {
            return Err(ColumnIndexError::EmptyQuery);
        }
        if self.is_empty() {
            log::warn!("column search on empty index for {}", self.db_id);
            return Ok(Vec::new());
        }
        let query = embedder
            .embed(&[semantic.to_string()])?
            .pop()
            .ok_or_else(|| ColumnIndexError::DimensionMismatch("no query vector returned".into()))?;
        self.search_vector(&query, k)
    }

    /// Ranks entries against an already-embedded query.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<ColumnHit>, ColumnIndexError> {
        if query.len() != self.dim {
            return Err(ColumnIndexError::DimensionMismatch(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, &IndexEntry)> = self
            .entries
            .iter()
            .map(|e| (cosine(query, &e.vector), e))
            .collect();
        // Scores equal up to summation noise count as ties, so rescaling the
        // query cannot reorder them.
        let rank_key = |s: f64| (s * 1e12).round() as i64;
        scored.sort_by(|(sa, a), (sb, b)| {
            rank_key(*sb)
                .cmp(&rank_key(*sa))
                .then_with(|| a.column.table.cmp(&b.column.table))
                .then_with(|| a.column.name.cmp(&b.column.name))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, e)| ColumnHit {
                column_name: e.column.name.clone(),
                table_name: e.column.table.clone(),
                column_type: e.column.declared_type.to_string(),
                column_desc: e.column.description.clone(),
                column_statistics: e.profile.statistics.clone(),
                score,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), ColumnIndexError> {
        Ok(cache::write_versioned(path, HEADER, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ColumnIndexError> {
        Ok(cache::read_versioned(path, HEADER)?)
    }
}

/// Cosine similarity in f64; zero when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnStatistics, TableDef};
    use crate::embedding::HashingEmbedder;

    fn schema(cols: &[(&str, &str)]) -> DatabaseSchema {
        let mut tables: Vec<TableDef> = Vec::new();
        for (table, col) in cols {
            let def = ColumnDef::new(*table, *col, "TEXT");
            match tables.iter_mut().find(|t| t.name == *table) {
                Some(t) => t.columns.push(def),
                None => tables.push(TableDef {
                    name: table.to_string(),
                    columns: vec![def],
                }),
            }
        }
        DatabaseSchema::new("s", tables, vec![]).unwrap()
    }

    fn empty_profiles(schema: &DatabaseSchema) -> Vec<ColumnProfile> {
        schema
            .columns()
            .map(|c| ColumnProfile {
                column: c.clone(),
                statistics: ColumnStatistics::Empty,
            })
            .collect()
    }

    struct Constant(usize);

    impl EmbeddingProvider for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
            Ok(texts.iter().take(self.0).map(|_| vec![1.0, 0.5]).collect())
        }
    }

    #[test]
    fn renders_both_templates() {
        let plain = ColumnDef::new("client", "city", "TEXT");
        assert_eq!(render_column_text(&plain), "a column named city in table client");
        let described = ColumnDef::new("district", "A2", "TEXT").with_description("district name");
        assert_eq!(
            render_column_text(&described),
            "a column named A2 in table district about district name"
        );
        assert_eq!(
            render_column_text(&ColumnDef::new("t", "", "")),
            "a column named  in table t"
        );
    }

    #[test]
    fn builds_one_entry_per_column() {
        let s = schema(&[("a", "id"), ("a", "name"), ("b", "id"), ("b", "a_id")]);
        let e = HashingEmbedder::new(64);
        let index = ColumnIndex::build(&s, &empty_profiles(&s), &e).unwrap();
        assert_eq!(index.len(), 4);
        assert!(index.entries.iter().all(|x| x.vector.len() == 64));
        assert_eq!(index.dim, 64);
    }

    #[test]
    fn empty_schema_gives_empty_index_and_no_hits() {
        let s = schema(&[]);
        let e = HashingEmbedder::new(16);
        let index = ColumnIndex::build(&s, &[], &e).unwrap();
        assert!(index.is_empty());
        assert!(index.search(&e, "anything", 5).unwrap().is_empty());
    }

    #[test]
    fn short_embedder_output_is_a_dimension_mismatch() {
        let s = schema(&[("a", "w"), ("a", "x"), ("b", "y"), ("b", "z")]);
        let err = ColumnIndex::build(&s, &empty_profiles(&s), &Constant(3)).unwrap_err();
        assert!(matches!(err, ColumnIndexError::DimensionMismatch(_)));
    }

    #[test]
    fn missing_profile_is_reported() {
        let s = schema(&[("a", "w"), ("a", "x")]);
        let mut profiles = empty_profiles(&s);
        profiles.pop();
        let err = ColumnIndex::build(&s, &profiles, &HashingEmbedder::new(8)).unwrap_err();
        assert!(matches!(err, ColumnIndexError::MissingProfile { .. }));
    }

    #[test]
    fn ties_break_by_table_then_column() {
        let s = schema(&[("zeta", "b"), ("alpha", "z"), ("alpha", "a"), ("mid", "q")]);
        let index = ColumnIndex::build(&s, &empty_profiles(&s), &Constant(usize::MAX)).unwrap();
        let hits = index.search(&Constant(usize::MAX), "whatever", 10).unwrap();
        let order: Vec<_> = hits
            .iter()
            .map(|h| format!("{}.{}", h.table_name, h.column_name))
            .collect();
        assert_eq!(order, ["alpha.a", "alpha.z", "mid.q", "zeta.b"]);
    }

    #[test]
    fn k_larger_than_index_returns_everything() {
        let s = schema(&[("a", "x"), ("a", "y")]);
        let e = HashingEmbedder::new(32);
        let index = ColumnIndex::build(&s, &empty_profiles(&s), &e).unwrap();
        assert_eq!(index.search(&e, "x", 50).unwrap().len(), 2);
        assert!(matches!(
            index.search(&e, "  ", 5),
            Err(ColumnIndexError::EmptyQuery)
        ));
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-3.0, 0.0]) + 1.0).abs() < 1e-12);
    }
}
