//! Per-item results, their aggregates, and the CSV and text renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cost::PriceTable;
use crate::agent::{FinishReason, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub index: usize,
    pub db_id: String,
    pub question: String,
    pub gold_sql: String,
    pub predicted_sql: Option<String>,
    pub ex: bool,
    pub detail: String,
    /// Set when the item could not be scored normally (missing database,
    /// failing gold query, missing replay record).
    pub failed: bool,
    pub finish: Option<FinishReason>,
    pub rounds: usize,
    pub usage: Option<Usage>,
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    pub ex_count: usize,
    pub ex_percent: f64,
    pub failures: usize,
    /// Over items that ran a session.
    pub sessions: usize,
    pub avg_rounds: Option<f64>,
    /// Present only when every session reported usage.
    pub avg_tokens: Option<f64>,
    pub avg_cost: Option<f64>,
}

impl Aggregates {
    pub fn from_items(items: &[ItemResult]) -> Self {
        let total = items.len();
        let ex_count = items.iter().filter(|i| i.ex).count();
        let sessions: Vec<&ItemResult> = items.iter().filter(|i| i.finish.is_some()).collect();
        let n = sessions.len() as f64;
        let mean = |values: Vec<f64>| (!values.is_empty()).then(|| values.iter().sum::<f64>() / n);
        let avg_rounds = mean(sessions.iter().map(|i| i.rounds as f64).collect());
        let all_usage = sessions.iter().all(|i| i.usage.is_some() && i.cost.is_some());
        let (avg_tokens, avg_cost) = if all_usage {
            (
                mean(sessions.iter().filter_map(|i| i.usage).map(|u| u.total() as f64).collect()),
                mean(sessions.iter().filter_map(|i| i.cost).collect()),
            )
        } else {
            (None, None)
        };
        Aggregates {
            total,
            ex_count,
            ex_percent: if total == 0 {
                0.0
            } else {
                100.0 * ex_count as f64 / total as f64
            },
            failures: items.iter().filter(|i| i.failed).count(),
            sessions: sessions.len(),
            avg_rounds,
            avg_tokens,
            avg_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemResult>,
    pub aggregates: Aggregates,
    pub prices: PriceTable,
    pub tokenizer: Option<String>,
}

impl EvalReport {
    pub fn new(items: Vec<ItemResult>, prices: PriceTable, tokenizer: Option<String>) -> Self {
        let aggregates = Aggregates::from_items(&items);
        EvalReport {
            items,
            aggregates,
            prices,
            tokenizer,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "index",
                "db_id",
                "ex",
                "failed",
                "finish",
                "rounds",
                "prompt_tokens",
                "completion_tokens",
                "cost",
                "predicted_sql",
                "gold_sql",
                "detail",
                "question",
            ])
            .expect("in-memory CSV write");
        for item in &self.items {
            let opt = |v: Option<String>| v.unwrap_or_default();
            writer
                .write_record([
                    item.index.to_string(),
                    item.db_id.clone(),
                    item.ex.to_string(),
                    item.failed.to_string(),
                    opt(item.finish.map(|f| finish_name(f).to_string())),
                    item.rounds.to_string(),
                    opt(item.usage.map(|u| u.prompt_tokens.to_string())),
                    opt(item.usage.map(|u| u.completion_tokens.to_string())),
                    opt(item.cost.map(|c| format!("{c:.6}"))),
                    opt(item.predicted_sql.clone()),
                    item.gold_sql.clone(),
                    item.detail.clone(),
                    item.question.clone(),
                ])
                .expect("in-memory CSV write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }

    pub fn summary(&self) -> String {
        let a = &self.aggregates;
        let mut out = String::new();
        let _ = writeln!(out, "items: {}", a.total);
        let _ = writeln!(out, "execution accuracy: {:.2}% ({}/{})", a.ex_percent, a.ex_count, a.total);
        let _ = writeln!(out, "failures: {}", a.failures);
        let _ = writeln!(out, "sessions: {}", a.sessions);
        if let Some(r) = a.avg_rounds {
            let _ = writeln!(out, "avg rounds: {r:.2}");
        }
        match (a.avg_tokens, a.avg_cost) {
            (Some(t), Some(c)) => {
                let tokenizer = self.tokenizer.as_deref().unwrap_or("reported by the endpoint");
                let _ = writeln!(out, "avg tokens: {t:.2} (tokenizer: {tokenizer})");
                let _ = writeln!(out, "avg cost: ${c:.6}");
            }
            _ if a.sessions > 0 => {
                let _ = writeln!(out, "avg tokens: unavailable (usage missing)");
            }
            _ => {}
        }
        out
    }

    /// Writes `report.csv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("summary.txt"), self.summary())
    }
}

fn finish_name(f: FinishReason) -> &'static str {
    match f {
        FinishReason::Done => "done",
        FinishReason::MaxTurns => "max_turns",
        FinishReason::BackendError => "backend_error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, ex: bool, rounds: usize, tokens: Option<u64>) -> ItemResult {
        ItemResult {
            index,
            db_id: "d".into(),
            question: "q, with comma".into(),
            gold_sql: "SELECT \"a\"".into(),
            predicted_sql: Some("SELECT 1".into()),
            ex,
            detail: "match".into(),
            failed: false,
            finish: Some(FinishReason::Done),
            rounds,
            usage: tokens.map(|t| Usage {
                prompt_tokens: t,
                completion_tokens: 0,
            }),
            cost: tokens.map(|t| t as f64 / 1e6),
        }
    }

    #[test]
    fn aggregates_recompute_from_csv() {
        let report = EvalReport::new(
            vec![row(0, true, 4, Some(4000)), row(1, false, 6, Some(5268))],
            PriceTable::default(),
            Some("whitespace".into()),
        );
        assert_eq!(report.aggregates.ex_percent, 50.0);
        assert_eq!(report.aggregates.avg_rounds, Some(5.0));
        assert_eq!(report.aggregates.avg_tokens, Some(4634.0));

        let text = report.to_csv();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        let ex = rows.iter().filter(|r| &r[2] == "true").count();
        let rounds: f64 = rows.iter().map(|r| r[5].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
        assert_eq!(100.0 * ex as f64 / rows.len() as f64, report.aggregates.ex_percent);
        assert_eq!(Some(rounds), report.aggregates.avg_rounds);
        assert_eq!(&rows[0][12], "q, with comma");
        assert!(report.summary().contains("execution accuracy: 50.00% (1/2)"));
    }

    #[test]
    fn missing_usage_hides_token_average() {
        let report = EvalReport::new(vec![row(0, true, 2, None)], PriceTable::default(), None);
        assert_eq!(report.aggregates.avg_tokens, None);
        assert!(report.summary().contains("unavailable"));
    }
}
