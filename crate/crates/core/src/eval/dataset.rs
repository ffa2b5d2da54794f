//! Spider- and BIRD-format question files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Spider,
    Bird,
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::Spider => "spider",
            DatasetFormat::Bird => "bird",
        }
    }

    fn sql_field(self) -> &'static str {
        match self {
            DatasetFormat::Spider => "query",
            DatasetFormat::Bird => "SQL",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spider" => Ok(DatasetFormat::Spider),
            "bird" => Ok(DatasetFormat::Bird),
            _ => Err(DatasetError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question: String,
    pub db_id: String,
    pub gold_sql: String,
    pub evidence: Option<String>,
    pub source: DatasetFormat,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is not valid JSON: {0}")]
    Json(String),
    #[error("dataset must be a JSON array of records")]
    NotAnArray,
    #[error("record {index} has no usable {field} field")]
    MalformedRecord { index: usize, field: String },
    #[error("unknown dataset format {0:?}; expected spider or bird")]
    UnknownFormat(String),
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<EvalItem>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, format)
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Vec<EvalItem>, DatasetError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    let records = value.as_array().ok_or(DatasetError::NotAnArray)?;
    records
        .iter()
        .enumerate()
        .map(|(index, record)| {
            let field = |name: &str| {
                record
                    .get(name)
                    .and_then(Value::as_str)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .ok_or_else(|| DatasetError::MalformedRecord {
                        index,
                        field: name.to_string(),
                    })
            };
            let evidence = match format {
                DatasetFormat::Bird => record
                    .get("evidence")
                    .and_then(Value::as_str)
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string),
                DatasetFormat::Spider => None,
            };
            Ok(EvalItem {
                question: field("question")?,
                db_id: field("db_id")?,
                gold_sql: field(format.sql_field())?,
                evidence,
                source: format,
            })
        })
        .collect()
}

/// `{root}/{db_id}/{db_id}.sqlite`, else `{root}/{db_id}.sqlite`.
pub fn resolve_db_path(root: &Path, db_id: &str) -> Option<PathBuf> {
    [
        root.join(db_id).join(format!("{db_id}.sqlite")),
        root.join(format!("{db_id}.sqlite")),
    ]
    .into_iter()
    .find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spider_records() {
        let text = r#"[
            {"question": "q1", "db_id": "a", "query": "SELECT 1", "query_toks": []},
            {"question": "q2", "db_id": "a", "query": "SELECT 2"},
            {"question": "q3", "db_id": "b", "query": "SELECT 3", "evidence": "ignored"}
        ]"#;
        let items = parse_dataset(text, DatasetFormat::Spider).unwrap();
        assert_eq!(items.len(), 3);
        assert!(items.iter().all(|i| i.evidence.is_none() && i.source == DatasetFormat::Spider));
        assert_eq!(items[2].gold_sql, "SELECT 3");
    }

    #[test]
    fn bird_records_keep_evidence() {
        let text = r#"[{"question": "q", "db_id": "bank", "SQL": "SELECT 1", "evidence": "A3 is the region"},
                       {"question": "q", "db_id": "bank", "SQL": "SELECT 1", "evidence": ""}]"#;
        let items = parse_dataset(text, DatasetFormat::Bird).unwrap();
        assert_eq!(items[0].evidence.as_deref(), Some("A3 is the region"));
        assert_eq!(items[1].evidence, None);
    }

    #[test]
    fn malformed_records_are_located() {
        let text = r#"[{"question": "q", "db_id": "a", "query": "SELECT 1"}, {"question": "q", "query": "SELECT 1"}]"#;
        match parse_dataset(text, DatasetFormat::Spider) {
            Err(DatasetError::MalformedRecord { index, field }) => {
                assert_eq!((index, field.as_str()), (1, "db_id"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_dataset(r#"[{"question": "q", "db_id": "a", "SQL": "  "}]"#, DatasetFormat::Bird),
            Err(DatasetError::MalformedRecord { index: 0, .. })
        ));
        assert!(matches!(parse_dataset("{}", DatasetFormat::Bird), Err(DatasetError::NotAnArray)));
        assert!(matches!("sparc".parse::<DatasetFormat>(), Err(DatasetError::UnknownFormat(_))));
        assert_eq!("BIRD".parse::<DatasetFormat>().unwrap(), DatasetFormat::Bird);
    }

    #[test]
    fn db_path_layouts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("x")).unwrap();
        std::fs::write(dir.path().join("x/x.sqlite"), b"").unwrap();
        std::fs::write(dir.path().join("y.sqlite"), b"").unwrap();
        assert_eq!(resolve_db_path(dir.path(), "x"), Some(dir.path().join("x/x.sqlite")));
        assert_eq!(resolve_db_path(dir.path(), "y"), Some(dir.path().join("y.sqlite")));
        assert_eq!(resolve_db_path(dir.path(), "z"), None);
    }
}
