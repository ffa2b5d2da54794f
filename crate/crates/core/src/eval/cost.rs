//! Average rounds, tokens and cost over session transcripts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{SessionTranscript, Usage};

/// Dollar prices per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_million: f64,
    pub completion_per_million: f64,
}

impl Default for PriceTable {
    /// List prices of gpt-4o-2024-05-13.
    fn default() -> Self {
        PriceTable {
            prompt_per_million: 5.0,
            completion_per_million: 15.0,
        }
    }
}

impl PriceTable {
    pub fn cost(&self, usage: &Usage) -> f64 {
        (usage.prompt_tokens as f64 * self.prompt_per_million
            + usage.completion_tokens as f64 * self.completion_per_million)
            / 1_000_000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub sessions: usize,
    pub avg_rounds: f64,
    pub avg_tokens: f64,
    pub avg_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("no transcripts to average")]
    Empty,
    #[error("transcript {index} has no token usage; configure a tokenizer for scripted runs")]
    MissingUsage { index: usize },
}

pub fn cost_report(transcripts: &[SessionTranscript], prices: &PriceTable) -> Result<CostReport, CostError> {
    if transcripts.is_empty() {
        return Err(CostError::Empty);
    }
    let mut rounds = 0usize;
    let mut tokens = 0u64;
    let mut cost = 0f64;
    for (index, t) in transcripts.iter().enumerate() {
        let usage = t.total_usage().ok_or(CostError::MissingUsage { index })?;
        rounds += t.turns.len();
        tokens += usage.total();
        cost += prices.cost(&usage);
    }
    let n = transcripts.len() as f64;
    Ok(CostReport {
        sessions: transcripts.len(),
        avg_rounds: rounds as f64 / n,
        avg_tokens: tokens as f64 / n,
        avg_cost: cost / n,
    })
}
