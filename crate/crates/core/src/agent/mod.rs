//! The interactive agent: action grammar, prompt, tools, backends and the
//! session loop.

pub mod action;
pub mod backend;
pub mod exemplars;
pub mod prompt;
pub mod session;
pub mod toolset;

pub use action::{parse_action, ParseFailure, ParsedAction, ToolAction};
pub use backend::{
    BackendError, ChatCompletionBackend, Completion, DecodingConfig, LlmBackend, ScriptStep,
    ScriptedBackend, Usage,
};
pub use exemplars::{Exemplar, ExemplarSet, INSTRUCTION};
pub use prompt::{build_prompt, schema_summary, Demonstration, Message, PromptBundle, PromptError};
pub use session::{
    read_transcripts, run_session, write_transcripts, FinishReason, SessionTranscript, Step,
    TranscriptRecord, Turn, DEFAULT_MAX_TURNS,
};
pub use toolset::{offline_embedder, Observation, Toolset, ToolsetError, ToolsetOptions};
