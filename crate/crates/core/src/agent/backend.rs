//! Language-model backends: a remote chat-completion endpoint and a scripted
//! replay backend for offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::Message;
use crate::http::{EndpointConfig, HttpError, JsonClient};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
    pub stop: Vec<String>,
    pub max_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            model: "gpt-4o-2024-05-13".to_string(),
            temperature: 0.7,
            top_p: 0.95,
            n: 3,
            stop: vec!["\nObservation".into(), "\nThought".into(), "[END]".into()],
            max_tokens: 384,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid decoding configuration: {0}")]
pub struct InvalidDecoding(pub String);

impl DecodingConfig {
    pub fn validate(&self) -> Result<(), InvalidDecoding> {
        if self.n == 0 {
            return Err(InvalidDecoding("n must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(InvalidDecoding("max_tokens must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(InvalidDecoding("model name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// Candidates in sampling order.
    pub candidates: Vec<String>,
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, messages: &[Message], cfg: &DecodingConfig) -> Result<Completion, BackendError>;
}

/// OpenAI-compatible `/chat/completions` client.
pub struct ChatCompletionBackend {
    client: JsonClient,
}

impl ChatCompletionBackend {
    /// `config.url` is the full endpoint URL.
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        Ok(ChatCompletionBackend {
            client: JsonClient::new(config)?,
        })
    }
}

impl LlmBackend for ChatCompletionBackend {
    fn complete(&self, messages: &[Message], cfg: &DecodingConfig) -> Result<Completion, BackendError> {
        let body = json!({
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "n": cfg.n,
            "stop": cfg.stop,
            "max_tokens": cfg.max_tokens,
        });
        let response = self.client.post(&body)?;
        parse_chat_response(&response)
    }
}

fn parse_chat_response(response: &Value) -> Result<Completion, BackendError> {
    let choices = response["choices"]
        .as_array()
        .ok_or_else(|| BackendError::Malformed("missing choices array".into()))?;
    let mut indexed = Vec::with_capacity(choices.len());
    for (pos, choice) in choices.iter().enumerate() {
        let index = choice["index"].as_u64().unwrap_or(pos as u64);
        let content = choice["message"]["content"].as_str().unwrap_or_default();
        indexed.push((index, content.to_string()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    let usage = response.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u["prompt_tokens"].as_u64()?,
            completion_tokens: u["completion_tokens"].as_u64()?,
        })
    });
    Ok(Completion {
        candidates: indexed.into_iter().map(|(_, c)| c).collect(),
        usage,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(Vec<String>),
    Fail(String),
}

/// Replays a fixed sequence of replies, one step per call. Calls past the
/// end of the script fail. With a tokenizer, usage is counted over the
/// message contents and the candidates; without one it is absent.
pub struct ScriptedBackend {
    steps: Vec<ScriptStep>,
    cursor: AtomicUsize,
    tokenizer: Option<Arc<dyn Tokenizer>>,
}

impl ScriptedBackend {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        ScriptedBackend {
            steps,
            cursor: AtomicUsize::new(0),
            tokenizer: None,
        }
    }

    /// One single-candidate reply per output.
    pub fn from_outputs<I, S>(outputs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            outputs
                .into_iter()
                .map(|o| ScriptStep::Reply(vec![o.into()]))
                .collect(),
        )
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = Some(tokenizer);
        self
    }

    pub fn calls(&self) -> usize {
        self.cursor.load(Ordering::SeqCst)
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, messages: &[Message], _cfg: &DecodingConfig) -> Result<Completion, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        match self.steps.get(i) {
            None => Err(BackendError::Scripted(format!(
                "script exhausted after {} steps",
                self.steps.len()
            ))),
            Some(ScriptStep::Fail(message)) => Err(BackendError::Scripted(message.clone())),
            Some(ScriptStep::Reply(candidates)) => {
                let usage = self.tokenizer.as_ref().map(|t| Usage {
                    prompt_tokens: messages.iter().map(|m| t.count(&m.content) as u64).sum(),
                    completion_tokens: candidates.iter().map(|c| t.count(c) as u64).sum(),
                });
                Ok(Completion {
                    candidates: candidates.clone(),
                    usage,
                })
            }
        }
    }
}
