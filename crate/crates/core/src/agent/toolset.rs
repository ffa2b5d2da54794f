//! Tool handles bound to one database, and rendering of their results as
//! observations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::action::ToolAction;
use crate::cache::{CacheDir, CacheError};
use crate::catalog::{
    introspect_with, profile_schema, CatalogError, DatabaseSchema, DescriptionMap,
    IntrospectOptions, DEFAULT_SAMPLE_SIZE,
};
use crate::column_index::{render_column_text, ColumnIndex, ColumnIndexError, DEFAULT_TOP_K};
use crate::embedding::{EmbeddingProvider, HashingEmbedder};
use crate::executor::{cap_chars, execute_sql, render_observation, ExecutionLimits};
use crate::graph::{GraphError, SchemaGraph};
use crate::value_index::{ValueIndex, ValueIndexError};

#[derive(Debug, Error)]
pub enum ToolsetError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    ColumnIndex(#[from] ColumnIndexError),
    #[error(transparent)]
    ValueIndex(#[from] ValueIndexError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone)]
pub struct ToolsetOptions {
    pub descriptions: Option<DescriptionMap>,
    /// Drop foreign keys that reference missing columns instead of failing.
    pub drop_dangling_fks: bool,
    pub sample_size: usize,
    pub seed: u64,
    pub top_k: usize,
    pub limits: ExecutionLimits,
}

impl Default for ToolsetOptions {
    fn default() -> Self {
        ToolsetOptions {
            descriptions: None,
            drop_dangling_fks: false,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
            top_k: DEFAULT_TOP_K,
            limits: ExecutionLimits::default(),
        }
    }
}

/// Result of dispatching one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub text: String,
    /// True only for an `ExecuteSQL` that ran without error.
    pub executed_ok: bool,
}

pub struct Toolset {
    pub db_path: PathBuf,
    pub schema: DatabaseSchema,
    pub columns: ColumnIndex,
    pub values: ValueIndex,
    pub graph: SchemaGraph,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub top_k: usize,
    pub limits: ExecutionLimits,
}

/// The offline embedder for a schema: trigram hashing with IDF fitted on the
/// schema's own column texts.
pub fn offline_embedder(schema: &DatabaseSchema) -> HashingEmbedder {
    let texts: Vec<String> = schema.columns().map(render_column_text).collect();
    HashingEmbedder::fit(HashingEmbedder::DEFAULT_DIM, &texts)
}

impl Toolset {
    /// Introspects the database and builds every index in memory.
    pub fn build(
        db_path: &Path,
        db_id: &str,
        options: &ToolsetOptions,
        embedder: Option<Arc<dyn EmbeddingProvider>>,
    ) -> Result<Self, ToolsetError> {
        Self::open(db_path, db_id, options, embedder, None, false)
    }

    /// Like [`Toolset::build`], but reuses indexes persisted under `cache`
    /// when they are current, and persists freshly built ones. `rebuild`
    /// ignores existing cache files.
    pub fn open(
        db_path: &Path,
        db_id: &str,
        options: &ToolsetOptions,
        embedder: Option<Arc<dyn EmbeddingProvider>>,
        cache: Option<&CacheDir>,
        rebuild: bool,
    ) -> Result<Self, ToolsetError> {
        let schema = introspect_with(
            db_path,
            db_id,
            &IntrospectOptions {
                descriptions: options.descriptions.as_ref(),
                drop_dangling_fks: options.drop_dangling_fks,
            },
        )?;
        let embedder: Arc<dyn EmbeddingProvider> =
            embedder.unwrap_or_else(|| Arc::new(offline_embedder(&schema)));

        let cached_columns = cache
            .filter(|_| !rebuild)
            .and_then(|c| ColumnIndex::load(&c.column_index(db_id)).ok())
            .filter(|idx| {
                idx.db_id == schema.db_id
                    && idx.embedder == embedder.name()
                    && idx.entries.iter().map(|e| &e.column).eq(schema.columns())
            });
        let columns = match cached_columns {
            Some(idx) => idx,
            None => {
                let profiles = profile_schema(db_path, &schema, options.sample_size, options.seed)?;
                let idx = ColumnIndex::build(&schema, &profiles, embedder.as_ref())?;
                if let Some(c) = cache {
                    idx.save(&c.column_index(db_id))?;
                }
                idx
            }
        };

        let cached_values = cache
            .filter(|_| !rebuild)
            .and_then(|c| ValueIndex::load(&c.value_index(db_id)).ok())
            .filter(|idx| idx.db_id == schema.db_id);
        let values = match cached_values {
            Some(idx) => idx,
            None => {
                let idx = ValueIndex::build(db_path, &schema)?;
                if let Some(c) = cache {
                    idx.save(&c.value_index(db_id))?;
                }
                idx
            }
        };

        let graph = SchemaGraph::build(&schema);
        if let Some(c) = cache {
            graph.save(&c.schema_graph(db_id))?;
        }

        Ok(Toolset {
            db_path: db_path.to_path_buf(),
            schema,
            columns,
            values,
            graph,
            embedder,
            top_k: options.top_k,
            limits: options.limits,
        })
    }

    /// Runs a non-`Done` action and renders its outcome. Tool failures become
    /// `Error: …` text; nothing is propagated.
    pub fn dispatch(&self, action: &ToolAction) -> Observation {
        let mut executed_ok = false;
        let text = match action {
            ToolAction::SearchColumn { semantic } => self.search_column(semantic),
            ToolAction::SearchValue {
                value,
                table,
                column,
            } => self.search_value(value, table.as_deref(), column.as_deref()),
            ToolAction::FindShortestPath { start, end } => self.find_shortest_path(start, end),
            ToolAction::ExecuteSql { sql } => {
                let result = execute_sql(&self.db_path, sql, &self.limits);
                executed_ok = result.is_ok();
                render_observation(&result, &self.limits)
            }
            ToolAction::Done { .. } => "Error: Done is not a tool call".to_string(),
        };
        Observation {
            text: cap_chars(&text, self.limits.observation_char_cap),
            executed_ok,
        }
    }

    fn search_column(&self, semantic: &str) -> String {
        match self.columns.search(self.embedder.as_ref(), semantic, self.top_k) {
            Ok(hits) if hits.is_empty() => "(no columns)".to_string(),
            Ok(hits) => hits
                .iter()
                .map(|h| {
                    format!(
                        "column_name: {}, table_name: {}, column_type: {}, column_desc: {}, column_statistics: {}",
                        h.column_name,
                        h.table_name,
                        h.column_type,
                        h.column_desc.as_deref().unwrap_or("None"),
                        h.column_statistics
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"),
            Err(e) => format!("Error: {}: {e}", column_error_kind(&e)),
        }
    }

    fn search_value(&self, value: &str, table: Option<&str>, column: Option<&str>) -> String {
        match self.values.search(value, table, column, self.top_k) {
            Ok(hits) if hits.is_empty() => "(no matching values)".to_string(),
            Ok(hits) => hits
                .iter()
                .map(|h| format!("table: {}, column: {}, value: {}", h.table, h.column, h.value))
                .collect::<Vec<_>>()
                .join("\n"),
            Err(e) => format!("Error: {}: {e}", value_error_kind(&e)),
        }
    }

    fn find_shortest_path(&self, start: &str, end: &str) -> String {
        let resolved = self
            .graph
            .resolve_node(start)
            .and_then(|s| self.graph.resolve_node(end).map(|e| (s, e)))
            .and_then(|(s, e)| self.graph.find_shortest_path(&s, &e));
        match resolved {
            Ok(path) => format!(
                "Path: {}\nJoin: {}\nJoins: {}",
                path.nodes
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(" -> "),
                path.rendered,
                path.join_count
            ),
            Err(e) => format!("Error: {}: {e}", graph_error_kind(&e)),
        }
    }
}

fn column_error_kind(e: &ColumnIndexError) -> &'static str {
    match e {
        ColumnIndexError::EmbedderFailure(_) => "EmbedderFailure",
        ColumnIndexError::DimensionMismatch(_) => "DimensionMismatch",
        ColumnIndexError::MissingProfile { .. } => "MissingProfile",
        ColumnIndexError::EmptyQuery => "EmptyQuery",
        ColumnIndexError::Cache(_) => "Cache",
    }
}

fn value_error_kind(e: &ValueIndexError) -> &'static str {
    match e {
        ValueIndexError::QueryFailed(_) => "QueryFailed",
        ValueIndexError::UnknownTable(_) => "UnknownTable",
        ValueIndexError::UnknownColumn(_) => "UnknownColumn",
        ValueIndexError::EmptyQuery => "EmptyQuery",
        ValueIndexError::Cache(_) => "Cache",
    }
}

fn graph_error_kind(e: &GraphError) -> &'static str {
    match e {
        GraphError::UnknownNode { .. } => "UnknownNode",
        GraphError::AmbiguousNode { .. } => "AmbiguousNode",
        GraphError::NoPath { .. } => "NoPath",
    }
}
