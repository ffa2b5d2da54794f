//! Worked demonstration transcripts and the instruction text.

use serde::{Deserialize, Serialize};

use super::prompt::Demonstration;
use super::session::Turn;
use crate::eval::DatasetFormat;

pub const INSTRUCTION: &str = include_str!("../../data/instruction.txt");

const SPIDER_EXEMPLARS: &str = include_str!("../../data/exemplars/spider.json");
const BIRD_EXEMPLARS: &str = include_str!("../../data/exemplars/bird.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub evidence: Option<String>,
    pub turns: Vec<Turn>,
}

impl Exemplar {
    /// Question, optional evidence, then every turn as it would appear in
    /// a prompt history.
    pub fn render(&self, with_evidence: bool) -> String {
        let mut lines = vec![format!("Question: {}", self.question)];
        if let (true, Some(e)) = (with_evidence, &self.evidence) {
            lines.push(format!("Evidence: {e}"));
        }
        lines.extend(self.turns.iter().map(Turn::render));
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarDemo {
    /// Fixture database the exemplars were worked against.
    pub db: String,
    pub schema_text: String,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub family: String,
    pub demonstrations: Vec<ExemplarDemo>,
}

impl ExemplarSet {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The bundled set for a dataset family.
    pub fn builtin(format: DatasetFormat) -> Self {
        let text = match format {
            DatasetFormat::Spider => SPIDER_EXEMPLARS,
            DatasetFormat::Bird => BIRD_EXEMPLARS,
        };
        Self::from_json(text).expect("bundled exemplar files are valid")
    }

    pub fn demonstrations(&self, with_evidence: bool) -> Vec<Demonstration> {
        self.demonstrations
            .iter()
            .map(|d| Demonstration {
                schema_text: d.schema_text.clone(),
                exemplars: d.exemplars.iter().map(|e| e.render(with_evidence)).collect(),
            })
            .collect()
    }
}
