//! Okapi BM25 retrieval over the distinct values of a database's text columns.
//!
//! Scoring uses k1 = 1.2, b = 0.75 and the non-negative IDF
//! `ln((N - n + 0.5) / (n + 0.5) + 1)`. Corpus statistics are always global:
//! a table or column scope filters candidates, it does not re-index.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rusqlite::types::ValueRef;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{self, CacheError};
use crate::catalog::{open_read_only, quote_ident, CatalogError, ColumnType, DatabaseSchema};

const HEADER: &str = "SQLAGENT value-index v1";

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum ValueIndexError {
    #[error("query failed: {0}")]
    QueryFailed(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("query contains no searchable terms")]
    EmptyQuery,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl From<CatalogError> for ValueIndexError {
    fn from(err: CatalogError) -> Self {
        ValueIndexError::QueryFailed(err.to_string())
    }
}

impl From<rusqlite::Error> for ValueIndexError {
    fn from(err: rusqlite::Error) -> Self {
        ValueIndexError::QueryFailed(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueDoc {
    pub table: String,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueHit {
    pub table: String,
    pub column: String,
    pub value: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIndex {
    pub db_id: String,
    pub params: Bm25Params,
    pub documents: Vec<ValueDoc>,
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub total_docs: usize,
    /// Every table of the schema with all of its columns, for scope checks.
    scope: Vec<(String, Vec<String>)>,
}

impl ValueIndex {
    /// Indexes every distinct non-blank value of every text column.
    pub fn build(db_path: &Path, schema: &DatabaseSchema) -> Result<Self, ValueIndexError> {
        let conn = open_read_only(db_path)?;
        let mut documents = Vec::new();
        for table in &schema.tables {
            for column in table
                .columns
                .iter()
                .filter(|c| c.declared_type == ColumnType::Text)
            {
                let sql = format!(
                    "SELECT DISTINCT {col} FROM {table} WHERE {col} IS NOT NULL",
                    col = quote_ident(&column.name),
                    table = quote_ident(&table.name)
                );
                let mut stmt = conn.prepare(&sql)?;
                let mut rows = stmt.query([])?;
                let mut values = BTreeSet::new();
                while let Some(row) = rows.next()? {
                    let text = match row.get_ref(0)? {
                        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
                        ValueRef::Integer(i) => i.to_string(),
                        ValueRef::Real(r) => r.to_string(),
                        ValueRef::Null | ValueRef::Blob(_) => continue,
                    };
                    if !text.trim().is_empty() {
                        values.insert(text);
                    }
                }
                documents.extend(values.into_iter().map(|value| ValueDoc {
                    table: table.name.clone(),
                    column: column.name.clone(),
                    value,
                }));
            }
        }
        Ok(Self::from_documents(schema, documents, Bm25Params::default()))
    }

    /// Indexes an explicit document list. Documents are expected to be
    /// distinct; the scope tables and columns come from `schema`.
    pub fn from_documents(
        schema: &DatabaseSchema,
        documents: Vec<ValueDoc>,
        params: Bm25Params,
    ) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(documents.len());
        for (id, doc) in documents.iter().enumerate() {
            let tokens = tokenize(&doc.value);
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: id as u32,
                    tf,
                });
            }
        }
        let total_docs = documents.len();
        let avg_doc_length = if total_docs == 0 {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / total_docs as f64
        };
        ValueIndex {
            db_id: schema.db_id.clone(),
            params,
            documents,
            postings,
            doc_lengths,
            avg_doc_length,
            total_docs,
            scope: schema
                .tables
                .iter()
                .map(|t| {
                    (
                        t.name.clone(),
                        t.columns.iter().map(|c| c.name.clone()).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn idf(&self, doc_freq: usize) -> f64 {
        let n = self.total_docs as f64;
        let df = doc_freq as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Resolves an optional scope to canonical (table, column) spellings.
    fn resolve_scope(
        &self,
        table: Option<&str>,
        column: Option<&str>,
    ) -> Result<(Option<String>, Option<String>), ValueIndexError> {
        let table = match table {
            None => None,
            Some(t) => Some(
                self.scope
                    .iter()
                    .find(|(name, _)| name.eq_ignore_ascii_case(t))
                    .ok_or_else(|| ValueIndexError::UnknownTable(t.to_string()))?,
            ),
        };
        let column = match column {
            None => None,
            Some(c) => {
                let found = match table {
                    Some((_, cols)) => cols.iter().find(|n| n.eq_ignore_ascii_case(c)),
                    None => self
                        .scope
                        .iter()
                        .flat_map(|(_, cols)| cols.iter())
                        .find(|n| n.eq_ignore_ascii_case(c)),
                };
                Some(found.ok_or_else(|| match table {
                    Some((t, _)) => ValueIndexError::UnknownColumn(format!("{t}.{c}")),
                    None => ValueIndexError::UnknownColumn(c.to_string()),
                })?)
            }
        };
        Ok((table.map(|(t, _)| t.clone()), column.cloned()))
    }

    /// Top-`k` documents for `value`, optionally restricted to a table and/or
    /// column. Documents scoring zero are omitted. Repeated query terms count
    /// once.
    pub fn search(
        &self,
        value: &str,
        table: Option<&str>,
        column: Option<&str>,
        k: usize,
    ) -> Result<Vec<ValueHit>, ValueIndexError> {
        let (table, column) = self.resolve_scope(table, column)?;
        let terms: BTreeSet<String> = tokenize(value).into_iter().collect();
        if terms.is_empty() {
            return Err(ValueIndexError::EmptyQuery);
        }
        let in_scope = |doc: &ValueDoc| {
            table.as_ref().is_none_or(|t| doc.table.eq_ignore_ascii_case(t))
                && column.as_ref().is_none_or(|c| doc.column.eq_ignore_ascii_case(c))
        };

        let Bm25Params { k1, b } = self.params;
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for posting in list {
                let doc = &self.documents[posting.doc as usize];
                if !in_scope(doc) {
                    continue;
                }
                let tf = f64::from(posting.tf);
                let dl = f64::from(self.doc_lengths[posting.doc as usize]);
                let norm = if self.avg_doc_length > 0.0 {
                    1.0 - b + b * dl / self.avg_doc_length
                } else {
                    1.0
                };
                *scores.entry(posting.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }

        let mut hits: Vec<ValueHit> = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(id, score)| {
                let doc = &self.documents[id as usize];
                ValueHit {
                    table: doc.table.clone(),
                    column: doc.column.clone(),
                    value: doc.value.clone(),
                    score,
                }
            })
            .collect();
        hits.sort_by(compare_hits);
        hits.truncate(k);
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<(), ValueIndexError> {
        Ok(cache::write_versioned(path, HEADER, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ValueIndexError> {
        Ok(cache::read_versioned(path, HEADER)?)
    }
}

/// Descending score, then (table, column, value) ascending.
pub fn compare_hits(a: &ValueHit, b: &ValueHit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.table.cmp(&b.table))
        .then_with(|| a.column.cmp(&b.column))
        .then_with(|| a.value.cmp(&b.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rusqlite::Connection;

    fn fixture(ddl: &str) -> (tempfile::TempDir, std::path::PathBuf, DatabaseSchema) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.sqlite");
        Connection::open(&path).unwrap().execute_batch(ddl).unwrap();
        let schema = crate::catalog::introspect(&path, "v", None).unwrap();
        (dir, path, schema)
    }

    #[test]
    fn tokenizer_splits_on_non_alphanumerics() {
        assert_eq!(tokenize("North-Bohemia, 2x!"), ["north", "bohemia", "2x"]);
        assert!(tokenize(" .;- ").is_empty());
    }

    #[test]
    fn indexes_text_values_with_expected_postings() {
        let (_d, path, schema) = fixture(
            "CREATE TABLE district (id INTEGER, A3 TEXT);
             INSERT INTO district VALUES (1, 'North Bohemia'), (2, 'Prague'), (3, 'Prague'), (4, NULL), (5, '  ');",
        );
        let index = ValueIndex::build(&path, &schema).unwrap();
        assert_eq!(index.total_docs, 2);
        let terms: Vec<_> = index.postings.keys().map(String::as_str).collect();
        assert_eq!(terms, ["bohemia", "north", "prague"]);
        assert_eq!(index.doc_lengths, vec![2, 1]);
        assert!((index.avg_doc_length - 1.5).abs() < 1e-12);
        for (doc, len) in index.doc_lengths.iter().enumerate() {
            let tf_sum: u32 = index
                .postings
                .values()
                .flatten()
                .filter(|p| p.doc as usize == doc)
                .map(|p| p.tf)
                .sum();
            assert_eq!(tf_sum, *len);
        }
    }

    #[test]
    fn integer_only_database_has_empty_index() {
        let (_d, path, schema) = fixture("CREATE TABLE n (a INTEGER, b REAL); INSERT INTO n VALUES (1, 2.5);");
        let index = ValueIndex::build(&path, &schema).unwrap();
        assert_eq!(index.total_docs, 0);
        assert!(index.search("1", None, None, 5).unwrap().is_empty());
    }

    #[test]
    fn same_value_in_two_columns_is_two_documents() {
        let (_d, path, schema) = fixture(
            "CREATE TABLE a (x TEXT, y TEXT); INSERT INTO a VALUES ('Prague', 'Prague');",
        );
        let index = ValueIndex::build(&path, &schema).unwrap();
        assert_eq!(index.total_docs, 2);
        assert_ne!(index.documents[0].column, index.documents[1].column);
    }

    #[test]
    fn scoping_and_errors() {
        let (_d, path, schema) = fixture(
            "CREATE TABLE district (A2 TEXT, A3 TEXT);
             CREATE TABLE account (frequency TEXT);
             INSERT INTO district VALUES ('Hl.m. Praha', 'Prague'), ('Benesov', 'central Bohemia');
             INSERT INTO account VALUES ('monthly issuance');",
        );
        let index = ValueIndex::build(&path, &schema).unwrap();
        assert!(index.search("prague", Some("account"), None, 10).unwrap().is_empty());
        let hits = index.search("prague", Some("DISTRICT"), None, 10).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].value, "Prague");
        assert!(index.search("zzz", None, None, 10).unwrap().is_empty());
        assert!(matches!(
            index.search("x", Some("nope"), None, 10),
            Err(ValueIndexError::UnknownTable(_))
        ));
        assert!(matches!(
            index.search("x", Some("account"), Some("A2"), 10),
            Err(ValueIndexError::UnknownColumn(_))
        ));
        assert!(matches!(
            index.search("!!", None, None, 10),
            Err(ValueIndexError::EmptyQuery)
        ));
        let by_column = index.search("bohemia", None, Some("a3"), 10).unwrap();
        assert_eq!(by_column[0].value, "central Bohemia");
    }

    #[test]
    fn idf_is_never_negative() {
        let (_d, path, schema) = fixture(
            "CREATE TABLE t (v TEXT); INSERT INTO t VALUES ('a'), ('a b'), ('a c');",
        );
        let index = ValueIndex::build(&path, &schema).unwrap();
        assert!(index.idf(3) > 0.0);
        let hits = index.search("a", None, None, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].value, "a");
    }
}
