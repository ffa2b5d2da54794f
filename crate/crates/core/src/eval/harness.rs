//! Runs a dataset through the agent (live, replayed or pre-computed
//! predictions) and scores every item.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::accuracy::{execution_accuracy, AccuracyError};
use super::cost::PriceTable;
use super::dataset::{resolve_db_path, DatasetFormat, EvalItem};
use super::report::{EvalReport, ItemResult};
use crate::agent::{
    build_prompt, run_session, DecodingConfig, ExemplarSet, LlmBackend, SessionTranscript,
    Toolset, ToolsetOptions, TranscriptRecord, INSTRUCTION,
};
use crate::cache::CacheDir;
use crate::catalog::DescriptionMap;
use crate::embedding::EmbeddingProvider;
use crate::tokenizer::Tokenizer;

/// Where predictions come from.
pub enum Predictor {
    /// A live model.
    Live(Arc<dyn LlmBackend>),
    /// Recorded sessions keyed by item index, re-run through the tools.
    Replay(BTreeMap<usize, SessionTranscript>),
    /// Predicted SQL keyed by item index; no sessions are run.
    Fixed(BTreeMap<usize, String>),
}

pub struct HarnessConfig {
    pub db_root: PathBuf,
    pub cache: Option<CacheDir>,
    pub toolset: ToolsetOptions,
    pub decoding: DecodingConfig,
    pub max_turns: usize,
    /// Show BIRD evidence to the model.
    pub oracle_knowledge: bool,
    pub parallelism: usize,
    pub prices: PriceTable,
    pub instruction: String,
    /// Defaults to the bundled set for the dataset family.
    pub exemplars: Option<ExemplarSet>,
    /// Defaults to the offline embedder.
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
    /// Spider `tables.json`, for column descriptions.
    pub spider_tables: Option<PathBuf>,
    /// Counts tokens when the backend reports no usage.
    pub tokenizer: Option<Arc<dyn Tokenizer>>,
}

impl HarnessConfig {
    pub fn new(db_root: impl Into<PathBuf>) -> Self {
        HarnessConfig {
            db_root: db_root.into(),
            cache: None,
            toolset: ToolsetOptions {
                drop_dangling_fks: true,
                ..ToolsetOptions::default()
            },
            decoding: DecodingConfig::default(),
            max_turns: crate::agent::DEFAULT_MAX_TURNS,
            oracle_knowledge: false,
            parallelism: 1,
            prices: PriceTable::default(),
            instruction: INSTRUCTION.to_string(),
            exemplars: None,
            embedder: None,
            spider_tables: None,
            tokenizer: None,
        }
    }
}

pub struct EvalRun {
    pub report: EvalReport,
    /// One record per item that ran a session, in item order.
    pub transcripts: Vec<TranscriptRecord>,
}

/// Column descriptions for a database, if any are shipped with it.
pub fn load_descriptions(db_path: &Path, db_id: &str, spider_tables: Option<&Path>) -> Option<DescriptionMap> {
    let bird_dir = db_path.parent()?.join("database_description");
    if bird_dir.is_dir() {
        match DescriptionMap::from_bird_dir(&bird_dir) {
            Ok(map) => return Some(map),
            Err(e) => log::warn!("{e}"),
        }
    }
    let tables = spider_tables?;
    match DescriptionMap::from_spider_tables(tables, db_id) {
        Ok(map) => Some(map),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    }
}

/// Opens the tools for one database, using the cache when configured.
pub fn open_toolset(cfg: &HarnessConfig, db_id: &str) -> Result<Toolset, String> {
    let path = resolve_db_path(&cfg.db_root, db_id)
        .ok_or_else(|| format!("database {db_id} not found under {}", cfg.db_root.display()))?;
    let options = ToolsetOptions {
        descriptions: load_descriptions(&path, db_id, cfg.spider_tables.as_deref()),
        ..cfg.toolset.clone()
    };
    Toolset::open(&path, db_id, &options, cfg.embedder.clone(), cfg.cache.as_ref(), false)
        .map_err(|e| format!("cannot open tools for {db_id}: {e}"))
}

fn with_tokenizer(backend: crate::agent::ScriptedBackend, cfg: &HarnessConfig) -> crate::agent::ScriptedBackend {
    match &cfg.tokenizer {
        Some(t) => backend.with_tokenizer(Arc::clone(t)),
        None => backend,
    }
}

/// Counts usage with the tokenizer for calls the backend left unreported.
fn fill_usage(transcript: &mut SessionTranscript, tokenizer: Option<&Arc<dyn Tokenizer>>) {
    let Some(tok) = tokenizer else { return };
    if transcript.usage.iter().all(Option::is_some) {
        return;
    }
    let mut history = Vec::new();
    for (call, turn) in transcript.turns.iter().enumerate() {
        if transcript.usage.get(call).is_some_and(Option::is_none) {
            let messages = transcript.prompt.messages(&history);
            transcript.usage[call] = Some(crate::agent::Usage {
                prompt_tokens: messages.iter().map(|m| tok.count(&m.content) as u64).sum(),
                completion_tokens: tok.count(&turn.model_output()) as u64,
            });
        }
        history.push(turn.clone());
    }
}

pub fn run_eval(items: &[EvalItem], predictor: &Predictor, cfg: &HarnessConfig) -> EvalRun {
    let needs_tools = !matches!(predictor, Predictor::Fixed(_));
    let db_ids: BTreeSet<&str> = items.iter().map(|i| i.db_id.as_str()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .expect("thread pool");

    let toolsets: HashMap<&str, Result<Arc<Toolset>, String>> = if needs_tools {
        pool.install(|| {
            db_ids
                .par_iter()
                .map(|&db| (db, open_toolset(cfg, db).map(Arc::new)))
                .collect()
        })
    } else {
        HashMap::new()
    };

    let results: Vec<(ItemResult, Option<TranscriptRecord>)> = pool.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(index, item)| evaluate_item(index, item, predictor, cfg, &toolsets))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut transcripts = Vec::new();
    for (row, record) in results {
        rows.push(row);
        transcripts.extend(record);
    }
    EvalRun {
        report: EvalReport::new(rows, cfg.prices, cfg.tokenizer.as_ref().map(|t| t.name().to_string())),
        transcripts,
    }
}

fn evaluate_item(
    index: usize,
    item: &EvalItem,
    predictor: &Predictor,
    cfg: &HarnessConfig,
    toolsets: &HashMap<&str, Result<Arc<Toolset>, String>>,
) -> (ItemResult, Option<TranscriptRecord>) {
    let mut row = ItemResult {
        index,
        db_id: item.db_id.clone(),
        question: item.question.clone(),
        gold_sql: item.gold_sql.clone(),
        predicted_sql: None,
        ex: false,
        detail: String::new(),
        failed: false,
        finish: None,
        rounds: 0,
        usage: None,
        cost: None,
    };
    let fail = |mut row: ItemResult, detail: String| {
        row.failed = true;
        row.detail = detail;
        (row, None)
    };

    let mut record = None;
    match predictor {
        Predictor::Fixed(map) => row.predicted_sql = map.get(&index).cloned(),
        Predictor::Live(_) | Predictor::Replay(_) => {
            let toolset = match toolsets.get(item.db_id.as_str()) {
                Some(Ok(t)) => Arc::clone(t),
                Some(Err(e)) => return fail(row, e.clone()),
                None => return fail(row, format!("no tools for {}", item.db_id)),
            };
            let exemplars = cfg
                .exemplars
                .clone()
                .unwrap_or_else(|| ExemplarSet::builtin(item.source));
            let with_evidence = cfg.oracle_knowledge && item.source == DatasetFormat::Bird;
            let evidence = if cfg.oracle_knowledge { item.evidence.as_deref() } else { None };
            let prompt = match build_prompt(
                &cfg.instruction,
                exemplars.demonstrations(with_evidence),
                &toolset.schema,
                &item.question,
                evidence,
            ) {
                Ok(p) => p,
                Err(e) => return fail(row, e.to_string()),
            };
            let mut transcript = match predictor {
                Predictor::Live(backend) => run_session(backend.as_ref(), &toolset, prompt, &cfg.decoding, cfg.max_turns),
                Predictor::Replay(map) => {
                    let Some(recorded) = map.get(&index) else {
                        return fail(row, format!("no recorded session for item {index}"));
                    };
                    let backend = with_tokenizer(recorded.replay_backend(), cfg);
                    run_session(&backend, &toolset, prompt, &cfg.decoding, cfg.max_turns)
                }
                Predictor::Fixed(_) => unreachable!(),
            };
            fill_usage(&mut transcript, cfg.tokenizer.as_ref());
            row.predicted_sql = transcript.final_sql.clone();
            row.finish = Some(transcript.finish);
            row.rounds = transcript.turns.len();
            row.usage = transcript.total_usage();
            row.cost = row.usage.map(|u| cfg.prices.cost(&u));
            record = Some(TranscriptRecord::new(Some(index), item.db_id.clone(), transcript));
        }
    }

    let Some(pred) = row.predicted_sql.clone() else {
        row.detail = "no prediction".to_string();
        return (row, record);
    };
    let Some(db_path) = resolve_db_path(&cfg.db_root, &item.db_id) else {
        let detail = format!("database {} not found under {}", item.db_id, cfg.db_root.display());
        let (row, _) = fail(row, detail);
        return (row, record);
    };
    match execution_accuracy(&pred, &item.gold_sql, &db_path) {
        Ok(outcome) => {
            row.ex = outcome.ex;
            row.detail = outcome.detail;
        }
        Err(AccuracyError::GoldExecutionFailed(msg)) => {
            row.failed = true;
            row.detail = format!("gold query failed: {msg}");
        }
    }
    (row, record)
}
