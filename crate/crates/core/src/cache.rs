//! Versioned on-disk storage for per-database indexes.
//!
//! Each file starts with a one-line magic header naming the artifact and its
//! format version, followed by a JSON body. A header mismatch is reported as
//! [`CacheError::Stale`] so callers rebuild instead of misreading old data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cache file {path} has header {found:?}, expected {expected:?}")]
    Stale {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("cache file {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
}

pub(crate) fn write_versioned<T: Serialize>(
    path: &Path,
    header: &str,
    value: &T,
) -> Result<(), CacheError> {
    let io = |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let body = serde_json::to_vec(value).map_err(|e| CacheError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io)?;
        file.write_all(header.as_bytes()).map_err(io)?;
        file.write_all(b"\n").map_err(io)?;
        file.write_all(&body).map_err(io)?;
        file.write_all(b"\n").map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub(crate) fn read_versioned<T: DeserializeOwned>(
    path: &Path,
    header: &str,
) -> Result<T, CacheError> {
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let split = bytes.iter().position(|b| *b == b'\n').unwrap_or(bytes.len());
    let found = String::from_utf8_lossy(&bytes[..split]);
    if found != header {
        return Err(CacheError::Stale {
            path: path.to_path_buf(),
            found: found.chars().take(80).collect(),
            expected: header.to_string(),
        });
    }
    let body = bytes.get(split + 1..).unwrap_or_default();
    serde_json::from_slice(body).map_err(|e| CacheError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Cache directory layout: `{root}/{db_id}/{artifact}`.
#[derive(Debug, Clone)]
pub struct CacheDir {
    root: PathBuf,
}

impl CacheDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CacheDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn db_dir(&self, db_id: &str) -> PathBuf {
        self.root.join(db_id)
    }

    pub fn column_index(&self, db_id: &str) -> PathBuf {
        self.db_dir(db_id).join("columns.idx")
    }

    pub fn value_index(&self, db_id: &str) -> PathBuf {
        self.db_dir(db_id).join("values.idx")
    }

    pub fn schema_graph(&self, db_id: &str) -> PathBuf {
        self.db_dir(db_id).join("graph.idx")
    }
}
