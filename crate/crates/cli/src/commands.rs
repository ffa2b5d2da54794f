use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use sqlagent::agent::{
    build_prompt, read_transcripts, run_session, write_transcripts, ChatCompletionBackend, ExemplarSet,
    FinishReason, LlmBackend, SessionTranscript, TranscriptRecord,
};
use sqlagent::catalog::{introspect_with, IntrospectOptions};
use sqlagent::eval::harness::load_descriptions;
use sqlagent::eval::{
    difficulty_stats, load_dataset, open_toolset, resolve_db_path, run_eval, schema_stats, DatasetFormat,
    HarnessConfig, Predictor,
};
use sqlagent::{EmbeddingProvider, EndpointConfig, RemoteEmbedder, Toolset, WhitespaceTokenizer};

use crate::config::{Resolved, Settings, API_KEY_VAR};
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<ExitCode> {
    let name = match &cli.command {
        Command::Index { .. } => "index",
        Command::Ask { .. } => "ask",
        Command::Eval { .. } => "eval",
        Command::Stats { .. } => "stats",
        Command::Fixtures { .. } => "fixtures",
    };
    let cfg = Settings::resolve(cli.settings, cli.config.as_deref(), name)?;
    let audit = cfg.write(&cli.command)?;
    log::info!("effective config written to {}", audit.display());
    match cli.command {
        Command::Index { dbs } => index(&cfg, dbs),
        Command::Ask {
            db,
            question,
            evidence,
            format,
            replay,
        } => ask(&cfg, &db, &question, evidence.as_deref(), parse_format(&format)?, replay.as_deref()),
        Command::Eval {
            dataset,
            format,
            replay,
            predictions,
        } => eval(&cfg, &dataset, parse_format(&format)?, replay.as_deref(), predictions.as_deref()),
        Command::Stats { dataset, format } => stats(&cfg, &dataset, parse_format(&format)?),
        Command::Fixtures { out } => fixtures(&out),
    }
}

fn parse_format(text: &str) -> Result<DatasetFormat> {
    Ok(text.parse()?)
}

fn api_key() -> Result<String> {
    match std::env::var(API_KEY_VAR) {
        Ok(key) if !key.trim().is_empty() => Ok(key),
        _ => bail!("{API_KEY_VAR} is not set; export it to call the model, or pass --replay to run without one"),
    }
}

fn embedder(cfg: &Resolved) -> Result<Option<Arc<dyn EmbeddingProvider>>> {
    let Some((url, model)) = cfg.embedding() else {
        return Ok(None);
    };
    let remote = RemoteEmbedder::new(EndpointConfig::new(url, Some(api_key()?)), model)?;
    Ok(Some(Arc::new(remote)))
}

fn live_backend(cfg: &Resolved) -> Result<Arc<dyn LlmBackend>> {
    let key = api_key()?;
    Ok(Arc::new(ChatCompletionBackend::new(EndpointConfig::new(cfg.endpoint(), Some(key)))?))
}

fn harness(cfg: &Resolved) -> Result<HarnessConfig> {
    let mut h = HarnessConfig::new(cfg.db_root());
    h.cache = Some(cfg.cache());
    h.toolset = cfg.toolset();
    h.decoding = cfg.decoding();
    h.max_turns = cfg.max_turns();
    h.oracle_knowledge = cfg.oracle_knowledge();
    h.parallelism = cfg.parallelism();
    h.prices = cfg.prices();
    h.embedder = embedder(cfg)?;
    h.spider_tables = cfg.spider_tables();
    Ok(h)
}

/// Transcript records from a file, or from `transcripts.jsonl` in a directory.
fn load_replay(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let file = if path.is_dir() {
        path.join("transcripts.jsonl")
    } else {
        path.to_path_buf()
    };
    read_transcripts(&file).with_context(|| format!("cannot read transcripts from {}", file.display()))
}

/// Database ids under the root, from `{id}/{id}.sqlite` and `{id}.sqlite`.
fn discover_databases(root: &Path) -> Result<Vec<String>> {
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(root).with_context(|| format!("cannot list {}", root.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if path.is_dir() && path.join(format!("{name}.sqlite")).is_file() {
            ids.insert(name.to_string());
        } else if let Some(stem) = name.strip_suffix(".sqlite") {
            ids.insert(stem.to_string());
        }
    }
    Ok(ids.into_iter().collect())
}

fn index(cfg: &Resolved, dbs: Vec<String>) -> Result<ExitCode> {
    let root = cfg.db_root();
    let dbs = if dbs.is_empty() { discover_databases(&root)? } else { dbs };
    if dbs.is_empty() {
        bail!("no databases found under {}", root.display());
    }
    let cache = cfg.cache();
    let embedder = embedder(cfg)?;
    let mut failures = 0;
    for db in &dbs {
        let built = resolve_db_path(&root, db)
            .ok_or_else(|| format!("not found under {}", root.display()))
            .and_then(|path| {
                let options = sqlagent::agent::ToolsetOptions {
                    descriptions: load_descriptions(&path, db, cfg.spider_tables().as_deref()),
                    ..cfg.toolset()
                };
                Toolset::open(&path, db, &options, embedder.clone(), Some(&cache), true).map_err(|e| e.to_string())
            });
        match built {
            Ok(t) => println!(
                "{db}: {} tables, {} columns, {} values, {} foreign keys",
                t.schema.tables.len(),
                t.columns.len(),
                t.values.total_docs,
                t.graph.fk_edges.len()
            ),
            Err(e) => {
                failures += 1;
                eprintln!("{db}: {e}");
            }
        }
    }
    println!("indexed {} of {} databases into {}", dbs.len() - failures, dbs.len(), cache.root().display());
    Ok(partial(failures))
}

fn partial(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} item(s) failed");
        ExitCode::from(2)
    }
}

fn ask(
    cfg: &Resolved,
    db: &str,
    question: &str,
    evidence: Option<&str>,
    format: DatasetFormat,
    replay: Option<&Path>,
) -> Result<ExitCode> {
    let h = harness(cfg)?;
    let backend: Arc<dyn LlmBackend> = match replay {
        Some(path) => {
            let record = load_replay(path)?
                .into_iter()
                .next()
                .with_context(|| format!("{} holds no transcript", path.display()))?;
            Arc::new(record.transcript.replay_backend().with_tokenizer(Arc::new(WhitespaceTokenizer)))
        }
        None => live_backend(cfg)?,
    };
    let toolset = open_toolset(&h, db).map_err(anyhow::Error::msg)?;
    let demos = ExemplarSet::builtin(format).demonstrations(evidence.is_some() && format == DatasetFormat::Bird);
    let prompt = build_prompt(&h.instruction, demos, &toolset.schema, question, evidence)?;
    let transcript = run_session(backend.as_ref(), &toolset, prompt, &h.decoding, h.max_turns);

    for turn in &transcript.turns {
        println!("{}\n", turn.render());
    }
    match &transcript.final_sql {
        Some(sql) => println!("Final SQL: {sql}"),
        None => println!("Final SQL: (none)"),
    }
    println!("Finish: {}", finish_name(transcript.finish));
    let path = cfg.run_dir().join("transcripts.jsonl");
    let failed = transcript.finish == FinishReason::BackendError;
    if let Some(err) = &transcript.backend_error {
        eprintln!("backend error: {err}");
    }
    write_transcripts(&path, &[TranscriptRecord::new(None, db, transcript)])?;
    Ok(partial(usize::from(failed)))
}

fn finish_name(f: FinishReason) -> &'static str {
    match f {
        FinishReason::Done => "done",
        FinishReason::MaxTurns => "max_turns",
        FinishReason::BackendError => "backend_error",
    }
}

/// One predicted query per line; a trailing tab-separated db id is dropped.
fn load_predictions(path: &Path) -> Result<BTreeMap<usize, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let sql = line.split('\t').next().unwrap_or_default().trim();
            (!sql.is_empty()).then(|| (i, sql.to_string()))
        })
        .collect())
}

fn eval(
    cfg: &Resolved,
    dataset: &Path,
    format: DatasetFormat,
    replay: Option<&Path>,
    predictions: Option<&Path>,
) -> Result<ExitCode> {
    let items = load_dataset(dataset, format)?;
    let mut h = harness(cfg)?;
    let predictor = match (replay, predictions) {
        (Some(path), _) => {
            h.tokenizer = Some(Arc::new(WhitespaceTokenizer));
            let records = load_replay(path)?;
            let map: BTreeMap<usize, SessionTranscript> = records
                .into_iter()
                .enumerate()
                .map(|(pos, r)| (r.item_index.unwrap_or(pos), r.transcript))
                .collect();
            Predictor::Replay(map)
        }
        (None, Some(path)) => Predictor::Fixed(load_predictions(path)?),
        (None, None) => Predictor::Live(live_backend(cfg)?),
    };
    let run = run_eval(&items, &predictor, &h);

    let dir = cfg.run_dir();
    run.report.write(&dir)?;
    if !run.transcripts.is_empty() {
        write_transcripts(&dir.join("transcripts.jsonl"), &run.transcripts)?;
    }
    print!("{}", run.report.summary());
    println!("outputs: {}", dir.display());
    Ok(partial(run.report.aggregates.failures))
}

fn stats(cfg: &Resolved, dataset: &Path, format: DatasetFormat) -> Result<ExitCode> {
    let items = load_dataset(dataset, format)?;
    let root = cfg.db_root();
    let ids: BTreeSet<&str> = items.iter().map(|i| i.db_id.as_str()).collect();
    let paths: Vec<(&str, PathBuf)> = ids
        .iter()
        .filter_map(|id| resolve_db_path(&root, id).map(|p| (*id, p)))
        .collect();
    let schema = if !ids.is_empty() && paths.len() == ids.len() {
        let options = IntrospectOptions {
            descriptions: None,
            drop_dangling_fks: true,
        };
        let schemas = paths
            .iter()
            .map(|(id, p)| introspect_with(p, id, &options))
            .collect::<Result<Vec<_>, _>>()?;
        Some(schema_stats(&schemas, &WhitespaceTokenizer))
    } else {
        if !paths.is_empty() {
            log::warn!("only {} of {} databases found; schema statistics skipped", paths.len(), ids.len());
        }
        None
    };
    let s = difficulty_stats(&items, cfg.coverage()?, schema);

    println!("items: {}", items.len());
    println!("cvr={:.2} ({}/{})", s.cvr.percent, s.cvr.numerator, s.cvr.denominator);
    println!(
        "cvcr={:.2} ({}/{}, coverage {})",
        s.cvcr.percent,
        s.cvcr.numerator,
        s.cvcr.denominator,
        cfg.0.coverage.as_deref().unwrap_or("all")
    );
    let j = &s.joins;
    println!(
        "tables per query: 1={} 2={} 3={} 4+={} unparsed={} avg={:.2}",
        j.one, j.two, j.three, j.four_plus, j.residual, j.average
    );
    if let Some(sc) = &s.schema {
        println!(
            "databases={} tb_per_db={:.2} col_per_tb={:.2} fk_per_db={:.2} stk_per_db={:.1} (tokenizer {})",
            sc.databases, sc.tb_per_db, sc.col_per_tb, sc.fk_per_db, sc.stk_per_db, sc.tokenizer
        );
    }
    let path = cfg.run_dir().join("stats.json");
    std::fs::write(&path, serde_json::to_string_pretty(&s)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn fixtures(out: &Path) -> Result<ExitCode> {
    let dbs = sqlagent::fixtures::materialize(out)?;
    let (dataset, transcripts) = sqlagent::fixtures::write_golden(out)?;
    for path in dbs.iter().chain([&dataset, &transcripts]) {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
