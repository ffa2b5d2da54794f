//! Small bundled databases and the replay fixtures built on them.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot write fixture {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot create fixture database {path}: {source}")]
    Sqlite {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
}

pub struct Fixture {
    pub name: &'static str,
    pub sql: &'static str,
    /// BIRD-style description CSVs as (table, contents).
    pub descriptions: &'static [(&'static str, &'static str)],
}

pub const FIXTURES: &[Fixture] = &[
    Fixture {
        name: "bank",
        sql: include_str!("../data/fixtures/bank.sql"),
        descriptions: &[
            ("account", include_str!("../data/fixtures/bank_descriptions/account.csv")),
            ("client", include_str!("../data/fixtures/bank_descriptions/client.csv")),
            ("district", include_str!("../data/fixtures/bank_descriptions/district.csv")),
            ("loan", include_str!("../data/fixtures/bank_descriptions/loan.csv")),
        ],
    },
    Fixture {
        name: "clubs",
        sql: include_str!("../data/fixtures/clubs.sql"),
        descriptions: &[],
    },
    Fixture {
        name: "library",
        sql: include_str!("../data/fixtures/library.sql"),
        descriptions: &[],
    },
];

/// Seven model outputs for the bank question, in locate, join, execute order.
pub const GOLDEN_OUTPUTS: &str = include_str!("../data/golden/outputs.json");
/// The bank question as a one-item BIRD-format dataset.
pub const GOLDEN_DATASET: &str = include_str!("../data/golden/dataset.json");
/// The recorded session for [`GOLDEN_DATASET`].
pub const GOLDEN_TRANSCRIPTS: &str = include_str!("../data/golden/transcripts.jsonl");

pub fn fixture(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Where a database lives under a root: `{root}/{db_id}/{db_id}.sqlite`.
pub fn db_path(root: &Path, db_id: &str) -> PathBuf {
    root.join(db_id).join(format!("{db_id}.sqlite"))
}

/// Writes every fixture database, replacing existing files, and returns
/// their paths. Description CSVs go to `{root}/{db}/database_description/`.
pub fn materialize(root: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    FIXTURES.iter().map(|f| materialize_one(root, f)).collect()
}

pub fn materialize_one(root: &Path, fixture: &Fixture) -> Result<PathBuf, FixtureError> {
    let path = db_path(root, fixture.name);
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FixtureError::Io { path, source }
    };
    let dir = path.parent().expect("fixture path has a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if path.exists() {
        fs::remove_file(&path).map_err(io_err(&path))?;
    }
    let sqlite_err = |source| FixtureError::Sqlite {
        path: path.clone(),
        source,
    };
    let conn = rusqlite::Connection::open(&path).map_err(sqlite_err)?;
    conn.execute_batch(fixture.sql).map_err(sqlite_err)?;
    conn.close().map_err(|(_, e)| sqlite_err(e))?;

    if !fixture.descriptions.is_empty() {
        let desc_dir = dir.join("database_description");
        fs::create_dir_all(&desc_dir).map_err(io_err(&desc_dir))?;
        for (table, csv) in fixture.descriptions {
            let file = desc_dir.join(format!("{table}.csv"));
            fs::write(&file, csv).map_err(io_err(&file))?;
        }
    }
    Ok(path)
}

/// Writes the golden dataset and transcripts file into `dir`, returning
/// (dataset path, transcripts path).
pub fn write_golden(dir: &Path) -> Result<(PathBuf, PathBuf), FixtureError> {
    fs::create_dir_all(dir).map_err(|source| FixtureError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let dataset = dir.join("dataset.json");
    let transcripts = dir.join("transcripts.jsonl");
    for (path, text) in [(&dataset, GOLDEN_DATASET), (&transcripts, GOLDEN_TRANSCRIPTS)] {
        fs::write(path, text).map_err(|source| FixtureError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok((dataset, transcripts))
}
