//! Prompt assembly: instruction, demonstrations, target schema summary,
//! question, then the interaction history.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::Turn;
use crate::catalog::DatabaseSchema;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("the instruction text is empty")]
    EmptyInstruction,
    #[error("at least one demonstration is required")]
    NoDemonstrations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub schema_text: String,
    /// Fully worked transcripts over the schema above.
    pub exemplars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub demonstrations: Vec<Demonstration>,
    pub target_schema_summary: String,
    pub question: String,
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Message {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// One line of comma-separated table names plus the foreign-key count.
pub fn schema_summary(schema: &DatabaseSchema) -> String {
    format!(
        "Tables: {}\nForeign keys: {}",
        schema.table_names().join(", "),
        schema.relations.len()
    )
}

pub fn build_prompt(
    instruction: &str,
    demonstrations: Vec<Demonstration>,
    schema: &DatabaseSchema,
    question: &str,
    evidence: Option<&str>,
) -> Result<PromptBundle, PromptError> {
    if instruction.trim().is_empty() {
        return Err(PromptError::EmptyInstruction);
    }
    if demonstrations.is_empty() {
        return Err(PromptError::NoDemonstrations);
    }
    Ok(PromptBundle {
        instruction: instruction.trim_end().to_string(),
        demonstrations,
        target_schema_summary: schema_summary(schema),
        question: question.trim().to_string(),
        evidence: evidence
            .map(str::trim)
            .filter(|e| !e.is_empty())
            .map(str::to_string),
    })
}

impl PromptBundle {
    /// Demonstrations, schema summary and question, without the instruction.
    pub fn task_text(&self) -> String {
        let mut out = String::new();
        for (i, demo) in self.demonstrations.iter().enumerate() {
            out.push_str(&format!("### Demonstration {}\n{}\n", i + 1, demo.schema_text.trim_end()));
            for exemplar in &demo.exemplars {
                out.push('\n');
                out.push_str(exemplar.trim_end());
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str("### Task\n");
        out.push_str(&self.target_schema_summary);
        out.push_str(&format!("\nQuestion: {}\n", self.question));
        if let Some(evidence) = &self.evidence {
            out.push_str(&format!("Evidence: {evidence}\n"));
        }
        out
    }

    /// Full flat text: instruction, then [`PromptBundle::task_text`].
    pub fn serialize(&self) -> String {
        format!("{}\n\n{}", self.instruction, self.task_text())
    }

    /// Chat messages for the prompt followed by `history`: the instruction
    /// as the system message, everything else as one user message.
    pub fn messages(&self, history: &[Turn]) -> Vec<Message> {
        let mut user = self.task_text();
        for turn in history {
            user.push_str(&turn.render());
            user.push('\n');
        }
        vec![Message::new("system", &self.instruction), Message::new("user", user)]
    }
}
