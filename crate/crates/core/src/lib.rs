//! Text-to-SQL through tool use: a language model explores a database with
//! column search, value search, join-path search and query execution, and an
//! evaluation harness scores the resulting SQL.

pub mod agent;
pub mod cache;
pub mod catalog;
pub mod column_index;
pub mod embedding;
pub mod eval;
pub mod executor;
pub mod fixtures;
pub mod graph;
pub mod http;
pub mod sqllex;
pub mod tokenizer;
pub mod value_index;

pub use agent::{
    build_prompt, parse_action, run_session, DecodingConfig, LlmBackend, PromptBundle,
    SessionTranscript, ToolAction, Toolset, ToolsetOptions,
};
pub use cache::CacheDir;
pub use catalog::{introspect, ColumnDef, DatabaseSchema, ForeignKey, TableDef};
pub use column_index::{ColumnHit, ColumnIndex};
pub use embedding::{EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
pub use eval::{execution_accuracy, load_dataset, DatasetFormat, EvalItem, EvalReport};
pub use executor::{execute_sql, ExecutionLimits, ExecutionResult};
pub use graph::{JoinPath, NodeId, SchemaGraph};
pub use http::{EndpointConfig, RetryPolicy};
pub use tokenizer::{Tokenizer, WhitespaceTokenizer};
pub use value_index::{ValueHit, ValueIndex};
