//! Independent reference implementations and random generators shared by
//! the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use sqlagent::catalog::{ColumnDef, ColumnProfile, ColumnStatistics, DatabaseSchema, ForeignKey, TableDef};
use sqlagent::value_index::ValueDoc;

// ---------------------------------------------------------------- BM25

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Okapi BM25 computed document by document from the raw texts. Returns
/// every in-scope document with a positive score, keyed by document index.
pub fn bm25_oracle(
    docs: &[ValueDoc],
    query: &str,
    table: Option<&str>,
    column: Option<&str>,
    k1: f64,
    b: f64,
) -> BTreeMap<usize, f64> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| words(&d.value)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let terms: BTreeSet<String> = words(query).into_iter().collect();
    let mut out = BTreeMap::new();
    for (i, doc) in docs.iter().enumerate() {
        if table.is_some_and(|t| !doc.table.eq_ignore_ascii_case(t))
            || column.is_some_and(|c| !doc.column.eq_ignore_ascii_case(c))
        {
            continue;
        }
        let dl = tokenized[i].len() as f64;
        let mut score = 0.0;
        for term in &terms {
            let df = tokenized.iter().filter(|t| t.contains(term)).count() as f64;
            let tf = tokenized[i].iter().filter(|w| *w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if score > 0.0 {
            out.insert(i, score);
        }
    }
    out
}

/// A schema with tables t0..t{tables-1}, each with columns c0 and c1, plus
/// distinct random documents over a small vocabulary.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize) -> (DatabaseSchema, Vec<ValueDoc>) {
    const VOCAB: &[&str] = &[
        "north", "south", "bohemia", "moravia", "prague", "central", "west", "east", "bank",
        "loan", "account", "river", "hill", "new", "old", "city", "town", "mesto", "nad", "labem",
        "usti", "brno", "plzen", "a1", "2024", "club", "fc", "united", "royal", "park",
    ];
    let tables = rng.random_range(1..=3);
    let schema = DatabaseSchema::new(
        "corpus",
        (0..tables)
            .map(|t| TableDef {
                name: format!("t{t}"),
                columns: (0..2).map(|c| ColumnDef::new(format!("t{t}"), format!("c{c}"), "TEXT")).collect(),
            })
            .collect(),
        vec![],
    )
    .unwrap();
    let target = rng.random_range(1..=max_docs);
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for _ in 0..target * 3 {
        if docs.len() == target {
            break;
        }
        let len = rng.random_range(1..=6);
        let value: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
        let sep = if rng.random_bool(0.2) { "-" } else { " " };
        let doc = ValueDoc {
            table: format!("t{}", rng.random_range(0..tables)),
            column: format!("c{}", rng.random_range(0..2)),
            value: value.join(sep),
        };
        if seen.insert((doc.table.clone(), doc.column.clone(), doc.value.clone())) {
            docs.push(doc);
        }
    }
    (schema, docs)
}

// ---------------------------------------------------------------- paths

/// Minimum number of foreign-key edges on any walk between two tables,
/// found by enumerating every simple path over the table graph.
pub fn min_joins_oracle(schema: &DatabaseSchema, from: &str, to: &str) -> Option<usize> {
    let edges: Vec<(String, String)> = schema
        .relations
        .iter()
        .map(|fk| (fk.from_table.clone(), fk.to_table.clone()))
        .collect();
    fn dfs(at: &str, to: &str, edges: &[(String, String)], visited: &mut Vec<String>, best: &mut Option<usize>) {
        if at == to {
            let len = visited.len() - 1;
            if best.is_none_or(|b| len < b) {
                *best = Some(len);
            }
            return;
        }
        for (a, b) in edges {
            let next = if a == at {
                b
            } else if b == at {
                a
            } else {
                continue;
            };
            if visited.iter().any(|v| v == next) {
                continue;
            }
            visited.push(next.clone());
            dfs(next, to, edges, visited, best);
            visited.pop();
        }
    }
    let mut best = None;
    dfs(from, to, &edges, &mut vec![from.to_string()], &mut best);
    best
}

/// Random schema: up to `max_tables` tables with 1..=`max_cols` columns and
/// a random set of foreign keys between distinct tables.
pub fn random_schema(rng: &mut ChaCha8Rng, max_tables: usize, max_cols: usize) -> DatabaseSchema {
    let n = rng.random_range(1..=max_tables);
    let tables: Vec<TableDef> = (0..n)
        .map(|t| TableDef {
            name: format!("T{t}"),
            columns: (0..rng.random_range(1..=max_cols))
                .map(|c| ColumnDef::new(format!("T{t}"), format!("c{c}"), "INTEGER"))
                .collect(),
        })
        .collect();
    let mut fks = Vec::new();
    let fk_count = rng.random_range(0..=n + 2);
    for _ in 0..fk_count {
        if n < 2 {
            break;
        }
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n);
        while b == a {
            b = rng.random_range(0..n);
        }
        let ca = rng.random_range(0..tables[a].columns.len());
        let cb = rng.random_range(0..tables[b].columns.len());
        fks.push(ForeignKey::new(&format!("T{a}"), &format!("c{ca}"), &format!("T{b}"), &format!("c{cb}")));
    }
    DatabaseSchema::new("random", tables, fks).unwrap()
}

// ---------------------------------------------------------------- embeddings

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in bytes {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn grams(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        return vec![];
    }
    let chars: Vec<char> = format!(" {collapsed} ").chars().collect();
    if chars.len() < 3 {
        return vec![chars.into_iter().collect()];
    }
    (0..chars.len() - 2).map(|i| chars[i..i + 3].iter().collect()).collect()
}

/// Trigram hashing with unit IDF and L2 normalisation, in f64.
pub fn hashed_vector(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for g in grams(text) {
        v[(fnv1a(g.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Profiles with no statistics, for indexes built without a database.
pub fn profiles(schema: &DatabaseSchema) -> Vec<ColumnProfile> {
    schema
        .columns()
        .map(|c| ColumnProfile {
            column: c.clone(),
            statistics: ColumnStatistics::Empty,
        })
        .collect()
}

/// Ten columns per table sharing the same nouns, so many columns overlap.
pub fn wide_schema(columns: usize) -> DatabaseSchema {
    let nouns = ["age", "name", "city", "amount", "date", "status", "balance", "region", "type", "code"];
    let tables = (0..columns / 10)
        .map(|t| TableDef {
            name: format!("table{t}"),
            columns: nouns
                .iter()
                .map(|n| ColumnDef::new(format!("table{t}"), format!("{n}_{t}"), "TEXT"))
                .collect(),
        })
        .collect();
    DatabaseSchema::new("wide", tables, vec![]).unwrap()
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn shuffled<T: Clone>(rng: &mut ChaCha8Rng, items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

// ---------------------------------------------------------------- files

pub fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    format!("{:x}", Sha256::digest(bytes))
}

/// Materialises the fixture databases under a fresh temporary directory.
pub fn fixture_root() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    sqlagent::fixtures::materialize(dir.path()).unwrap();
    let root = dir.path().to_path_buf();
    (dir, root)
}
