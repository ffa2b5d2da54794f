//! The thought-action loop and its transcript.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::{parse_action, ParseFailure, ToolAction};
use super::backend::{DecodingConfig, LlmBackend, ScriptStep, ScriptedBackend, Usage};
use super::prompt::PromptBundle;
use super::toolset::Toolset;

pub const DEFAULT_MAX_TURNS: usize = 15;

/// What the model did in one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Action(ToolAction),
    /// No candidate was usable; holds the first candidate verbatim.
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub thought: String,
    #[serde(flatten)]
    pub step: Step,
    /// Present for every step except `Done`.
    pub observation: Option<String>,
}

impl Turn {
    /// The model output this turn stands for.
    pub fn model_output(&self) -> String {
        match &self.step {
            Step::Malformed(raw) => raw.clone(),
            Step::Action(action) if self.thought.is_empty() => format!("Action: {action}"),
            Step::Action(action) => format!("Thought: {}\nAction: {action}", self.thought),
        }
    }

    /// The turn as it appears in the history section of the prompt.
    pub fn render(&self) -> String {
        let mut out = self.model_output();
        if let Some(obs) = &self.observation {
            out.push_str("\nObservation: ");
            out.push_str(obs);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Done,
    MaxTurns,
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub prompt: PromptBundle,
    pub turns: Vec<Turn>,
    pub final_sql: Option<String>,
    pub finish: FinishReason,
    /// Message of the backend failure when `finish` is `backend_error`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
    /// One entry per backend call; `None` when the backend reported none.
    pub usage: Vec<Option<Usage>>,
}

impl SessionTranscript {
    /// Summed usage, or `None` if any call lacks usage or there were no calls.
    pub fn total_usage(&self) -> Option<Usage> {
        if self.usage.is_empty() {
            return None;
        }
        self.usage.iter().try_fold(Usage::default(), |acc, u| {
            u.map(|u| Usage {
                prompt_tokens: acc.prompt_tokens + u.prompt_tokens,
                completion_tokens: acc.completion_tokens + u.completion_tokens,
            })
        })
    }

    /// A backend that reproduces this session's model outputs.
    pub fn replay_backend(&self) -> ScriptedBackend {
        ScriptedBackend::new(
            self.turns
                .iter()
                .map(|t| ScriptStep::Reply(vec![t.model_output()]))
                .collect(),
        )
    }
}

fn parse_failure_observation(failure: &ParseFailure) -> String {
    format!("Error: ParseFailure: {}", failure.reason)
}

/// Runs the loop until `Done`, `max_turns` turns, or a backend failure.
pub fn run_session(
    backend: &dyn LlmBackend,
    toolset: &Toolset,
    prompt: PromptBundle,
    cfg: &DecodingConfig,
    max_turns: usize,
) -> SessionTranscript {
    let mut turns: Vec<Turn> = Vec::new();
    let mut usage = Vec::new();
    let mut last_ok_sql: Option<String> = None;
    let mut finish = FinishReason::MaxTurns;
    let mut final_sql = None;
    let mut backend_error = None;

    while turns.len() < max_turns {
        let messages = prompt.messages(&turns);
        let completion = match backend.complete(&messages, cfg) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("backend failed after {} turns: {e}", turns.len());
                finish = FinishReason::BackendError;
                backend_error = Some(e.to_string());
                break;
            }
        };
        usage.push(completion.usage);

        let mut first_failure = None;
        let mut parsed = None;
        for candidate in &completion.candidates {
            match parse_action(candidate) {
                Ok(p) => {
                    parsed = Some(p);
                    break;
                }
                Err(f) => {
                    first_failure.get_or_insert(f);
                }
            }
        }
        let Some(parsed) = parsed else {
            let failure = first_failure.unwrap_or(ParseFailure {
                reason: "the model returned no output".into(),
            });
            turns.push(Turn {
                thought: String::new(),
                step: Step::Malformed(completion.candidates.first().cloned().unwrap_or_default()),
                observation: Some(parse_failure_observation(&failure)),
            });
            continue;
        };

        if let ToolAction::Done { sql } = &parsed.action {
            let answer = sql.clone().or_else(|| last_ok_sql.clone());
            if answer.is_none() {
                turns.push(Turn {
                    thought: String::new(),
                    step: Step::Malformed(format!(
                        "{}Action: {}",
                        if parsed.thought.is_empty() {
                            String::new()
                        } else {
                            format!("Thought: {}\n", parsed.thought)
                        },
                        parsed.action
                    )),
                    observation: Some(parse_failure_observation(&ParseFailure {
                        reason: "Done needs a SQL argument because no query has executed successfully yet".into(),
                    })),
                });
                continue;
            }
            turns.push(Turn {
                thought: parsed.thought,
                step: Step::Action(parsed.action),
                observation: None,
            });
            finish = FinishReason::Done;
            final_sql = answer;
            break;
        }

        let observation = toolset.dispatch(&parsed.action);
        if observation.executed_ok {
            if let ToolAction::ExecuteSql { sql } = &parsed.action {
                last_ok_sql = Some(sql.clone());
            }
        }
        turns.push(Turn {
            thought: parsed.thought,
            step: Step::Action(parsed.action),
            observation: Some(observation.text),
        });
    }

    if finish != FinishReason::Done {
        final_sql = last_ok_sql;
    }
    SessionTranscript {
        prompt,
        turns,
        final_sql,
        finish,
        backend_error,
        usage,
    }
}

pub const TRANSCRIPT_FORMAT: &str = "sqlagent-transcript/1";

/// One line of a transcripts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub format: String,
    pub item_index: Option<usize>,
    pub db_id: String,
    #[serde(flatten)]
    pub transcript: SessionTranscript,
}

impl TranscriptRecord {
    pub fn new(item_index: Option<usize>, db_id: impl Into<String>, transcript: SessionTranscript) -> Self {
        TranscriptRecord {
            format: TRANSCRIPT_FORMAT.to_string(),
            item_index,
            db_id: db_id.into(),
            transcript,
        }
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot access transcript file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

pub fn write_transcripts(path: &Path, records: &[TranscriptRecord]) -> Result<(), TranscriptError> {
    let io_err = |source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = io::BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        let line = serde_json::to_string(record).expect("transcripts serialize");
        writeln!(file, "{line}").map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

pub fn read_transcripts(path: &Path) -> Result<Vec<TranscriptRecord>, TranscriptError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|source| TranscriptError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| TranscriptError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| TranscriptError::Malformed {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.format != TRANSCRIPT_FORMAT {
            return Err(TranscriptError::Malformed {
                path: shown.clone(),
                line: i + 1,
                message: format!("unsupported format {:?}", record.format),
            });
        }
        records.push(record);
    }
    Ok(records)
}
