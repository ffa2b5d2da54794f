//! SQLite schema introspection and per-column value statistics.
//!
//! A [`DatabaseSchema`] holds the tables, columns and foreign-key relations of
//! one database. Cell values are not stored here; they live in the value index
//! and in the [`ColumnProfile`] summaries attached to the column index.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::hash::Hasher;
use std::io::Read;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of characters kept from each sampled text value.
pub const SAMPLE_CHAR_LIMIT: usize = 100;

/// Default number of distinct values sampled from a text column.
pub const DEFAULT_SAMPLE_SIZE: usize = 3;

const SQLITE_MAGIC: &[u8; 16] = b"SQLite format 3\0";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read database file {path}: {source}")]
    FileNotReadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a SQLite database")]
    NotASqliteFile(PathBuf),
    #[error("foreign key {from} -> {to} references a missing column")]
    DanglingForeignKey { from: String, to: String },
    #[error("column {table}.{column} does not exist")]
    ColumnMissing { table: String, column: String },
    #[error("query failed: {0}")]
    QueryFailed(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("cannot load column descriptions from {path}: {message}")]
    Descriptions { path: PathBuf, message: String },
}

impl From<rusqlite::Error> for CatalogError {
    fn from(err: rusqlite::Error) -> Self {
        CatalogError::QueryFailed(err.to_string())
    }
}

/// Coarse column type class derived from the declared SQL type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Integer,
    Real,
    Date,
    Blob,
    Other,
}

impl ColumnType {
    /// Maps a declared type string the way SQLite assigns column affinity,
    /// with date/time names split out of the numeric class.
    pub fn from_declared(declared: &str) -> Self {
        let upper = declared.to_ascii_uppercase();
        let has = |needle: &str| upper.contains(needle);
        if has("INT") {
            ColumnType::Integer
        } else if has("CHAR") || has("TEXT") || has("CLOB") {
            ColumnType::Text
        } else if has("REAL") || has("FLOA") || has("DOUB") || has("NUMERIC") || has("DECIMAL") {
            ColumnType::Real
        } else if has("DATE") || has("TIME") {
            ColumnType::Date
        } else if has("BLOB") {
            ColumnType::Blob
        } else {
            ColumnType::Other
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Date => "date",
            ColumnType::Blob => "blob",
            ColumnType::Other => "other",
        }
    }

    /// Whether min/max statistics are reported for this class.
    pub fn is_ordered(self) -> bool {
        matches!(self, ColumnType::Integer | ColumnType::Real | ColumnType::Date)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub table: String,
    pub name: String,
    pub declared_type: ColumnType,
    /// The type string exactly as declared in the DDL (may be empty).
    #[serde(default)]
    pub sql_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ColumnDef {
    pub fn new(table: impl Into<String>, name: impl Into<String>, sql_type: &str) -> Self {
        ColumnDef {
            table: table.into(),
            name: name.into(),
            declared_type: ColumnType::from_declared(sql_type),
            sql_type: sql_type.to_string(),
            description: None,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

impl ForeignKey {
    pub fn new(from_table: &str, from_column: &str, to_table: &str, to_column: &str) -> Self {
        ForeignKey {
            from_table: from_table.to_string(),
            from_column: from_column.to_string(),
            to_table: to_table.to_string(),
            to_column: to_column.to_string(),
        }
    }

    fn is_self_loop(&self) -> bool {
        self.from_table.eq_ignore_ascii_case(&self.to_table)
            && self.from_column.eq_ignore_ascii_case(&self.to_column)
    }
}

impl fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{} -> {}.{}",
            self.from_table, self.from_column, self.to_table, self.to_column
        )
    }
}

/// Tables, columns and foreign-key relations of one database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub relations: Vec<ForeignKey>,
}

impl DatabaseSchema {
    /// Builds a schema and checks its invariants. Foreign-key endpoints are
    /// rewritten to the canonical spelling of the table and column they name.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<TableDef>,
        relations: Vec<ForeignKey>,
    ) -> Result<Self, CatalogError> {
        let mut schema = DatabaseSchema {
            db_id: db_id.into(),
            tables,
            relations: Vec::new(),
        };
        schema.check_tables()?;
        for fk in relations {
            let fk = schema.canonical_fk(&fk)?;
            if fk.is_self_loop() {
                return Err(CatalogError::InvalidSchema(format!(
                    "foreign key {fk} is a self-loop"
                )));
            }
            schema.relations.push(fk);
        }
        Ok(schema)
    }

    fn check_tables(&self) -> Result<(), CatalogError> {
        let mut seen = HashSet::new();
        for table in &self.tables {
            if !seen.insert(table.name.to_lowercase()) {
                return Err(CatalogError::InvalidSchema(format!(
                    "duplicate table {}",
                    table.name
                )));
            }
            let mut cols = HashSet::new();
            for col in &table.columns {
                if !col.table.eq_ignore_ascii_case(&table.name) {
                    return Err(CatalogError::InvalidSchema(format!(
                        "column {} is listed under table {} but claims table {}",
                        col.name, table.name, col.table
                    )));
                }
                if !cols.insert(col.name.to_lowercase()) {
                    return Err(CatalogError::InvalidSchema(format!(
                        "duplicate column {}.{}",
                        table.name, col.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn canonical_fk(&self, fk: &ForeignKey) -> Result<ForeignKey, CatalogError> {
        let dangling = || CatalogError::DanglingForeignKey {
            from: format!("{}.{}", fk.from_table, fk.from_column),
            to: format!("{}.{}", fk.to_table, fk.to_column),
        };
        let from = self.column(&fk.from_table, &fk.from_column).ok_or_else(dangling)?;
        let to = self.column(&fk.to_table, &fk.to_column).ok_or_else(dangling)?;
        Ok(ForeignKey::new(&from.table, &from.name, &to.table, &to.name))
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table).and_then(|t| t.column(column))
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnDef> {
        self.tables.iter().flat_map(|t| t.columns.iter())
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn table_names(&self) -> Vec<&str> {
        self.tables.iter().map(|t| t.name.as_str()).collect()
    }

    /// Canonical DDL-style text of the schema, used for schema token counts.
    pub fn to_ddl(&self) -> String {
        let mut out = String::new();
        for table in &self.tables {
            out.push_str(&format!("CREATE TABLE {} (\n", quote_ident(&table.name)));
            let mut lines: Vec<String> = table
                .columns
                .iter()
                .map(|c| {
                    if c.sql_type.is_empty() {
                        format!("  {}", quote_ident(&c.name))
                    } else {
                        format!("  {} {}", quote_ident(&c.name), c.sql_type)
                    }
                })
                .collect();
            for fk in self
                .relations
                .iter()
                .filter(|fk| fk.from_table == table.name)
            {
                lines.push(format!(
                    "  FOREIGN KEY ({}) REFERENCES {}({})",
                    quote_ident(&fk.from_column),
                    quote_ident(&fk.to_table),
                    quote_ident(&fk.to_column)
                ));
            }
            out.push_str(&lines.join(",\n"));
            out.push_str("\n);\n");
        }
        out
    }
}

/// Double-quotes an SQL identifier.
pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Column descriptions keyed by case-insensitive (table, column).
#[derive(Debug, Clone, Default)]
pub struct DescriptionMap {
    entries: HashMap<(String, String), String>,
}

impl DescriptionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: &str, column: &str, description: impl Into<String>) {
        let description = description.into();
        let description = description.trim();
        if description.is_empty() {
            return;
        }
        self.entries.insert(
            (table.to_lowercase(), column.to_lowercase()),
            description.to_string(),
        );
    }

    pub fn get(&self, table: &str, column: &str) -> Option<&str> {
        self.entries
            .get(&(table.to_lowercase(), column.to_lowercase()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a BIRD-style `database_description/` folder: one CSV per table,
    /// named after the table, with `original_column_name` and
    /// `column_description` columns.
    pub fn from_bird_dir(dir: &Path) -> Result<Self, CatalogError> {
        let err = |message: String| CatalogError::Descriptions {
            path: dir.to_path_buf(),
            message,
        };
        let mut map = DescriptionMap::new();
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| err(e.to_string()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .map(|e| e.eq_ignore_ascii_case("csv"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for file in files {
            let table = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let bytes = std::fs::read(&file).map_err(|e| err(e.to_string()))?;
            map.read_bird_csv(&table, &bytes)
                .map_err(|m| err(format!("{}: {m}", file.display())))?;
        }
        Ok(map)
    }

    /// Parses one BIRD description CSV. Non-UTF-8 bytes are replaced rather
    /// than rejected; several published description files are Latin-1.
    pub fn read_bird_csv(&mut self, table: &str, bytes: &[u8]) -> Result<(), String> {
        let text = String::from_utf8_lossy(bytes);
        let text = text.trim_start_matches('\u{feff}');
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(|h| h.trim().trim_start_matches('\u{feff}').to_lowercase())
            .collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let name_idx = find("original_column_name").ok_or("missing original_column_name header")?;
        let desc_idx = find("column_description").ok_or("missing column_description header")?;
        for record in reader.records() {
            let record = record.map_err(|e| e.to_string())?;
            let (Some(name), Some(desc)) = (record.get(name_idx), record.get(desc_idx)) else {
                continue;
            };
            let name = name.trim();
            if !name.is_empty() {
                self.insert(table, name, desc);
            }
        }
        Ok(())
    }

    /// Builds a map from a Spider `tables.json`, using each column's
    /// human-readable name as its description.
    pub fn from_spider_tables(path: &Path, db_id: &str) -> Result<Self, CatalogError> {
        let err = |message: String| CatalogError::Descriptions {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries: Vec<SpiderTablesEntry> =
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let entry = entries
            .into_iter()
            .find(|e| e.db_id == db_id)
            .ok_or_else(|| err(format!("no entry for database {db_id}")))?;
        let mut map = DescriptionMap::new();
        for ((table_idx, original), (_, semantic)) in entry
            .column_names_original
            .iter()
            .zip(entry.column_names.iter())
        {
            let Ok(idx) = usize::try_from(*table_idx) else {
                continue;
            };
            if let Some(table) = entry.table_names_original.get(idx) {
                map.insert(table, original, semantic.as_str());
            }
        }
        Ok(map)
    }
}

#[derive(Deserialize)]
struct SpiderTablesEntry {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_names: Vec<(i64, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct IntrospectOptions<'a> {
    pub descriptions: Option<&'a DescriptionMap>,
    /// Drop foreign keys whose endpoints do not exist instead of failing.
    /// Some published benchmark databases declare such keys.
    pub drop_dangling_fks: bool,
}

/// Reads every user table, column and foreign key from a SQLite file.
pub fn introspect(
    db_path: &Path,
    db_id: &str,
    descriptions: Option<&DescriptionMap>,
) -> Result<DatabaseSchema, CatalogError> {
    introspect_with(
        db_path,
        db_id,
        &IntrospectOptions {
            descriptions,
            drop_dangling_fks: false,
        },
    )
}

pub fn introspect_with(
    db_path: &Path,
    db_id: &str,
    options: &IntrospectOptions<'_>,
) -> Result<DatabaseSchema, CatalogError> {
    let conn = open_read_only(db_path)?;

    let table_names: Vec<String> = {
        let mut stmt = conn.prepare(
            "SELECT name FROM sqlite_master \
             WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' \
             ORDER BY rowid",
        )?;
        let rows = stmt.query_map([], |row| row.get::<_, String>(0))?;
        rows.collect::<Result<_, _>>()?
    };

    let mut tables = Vec::with_capacity(table_names.len());
    for name in &table_names {
        let mut stmt =
            conn.prepare("SELECT name, type FROM pragma_table_info(?1) ORDER BY cid")?;
        let columns = stmt
            .query_map([name], |row| {
                Ok((row.get::<_, String>(0)?, row.get::<_, Option<String>>(1)?))
            })?
            .map(|r| {
                r.map(|(col, ty)| {
                    let mut def = ColumnDef::new(name.as_str(), col, ty.as_deref().unwrap_or(""));
                    if let Some(desc) = options
                        .descriptions
                        .and_then(|m| m.get(name, &def.name))
                    {
                        def.description = Some(desc.to_string());
                    }
                    def
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        tables.push(TableDef {
            name: name.clone(),
            columns,
        });
    }

    let mut schema = DatabaseSchema::new(db_id, tables, Vec::new())?;

    for name in &table_names {
        for fk in read_foreign_keys(&conn, &schema, name)? {
            match schema.canonical_fk(&fk) {
                Ok(fk) if fk.is_self_loop() => {
                    log::warn!("{db_id}: ignoring self-referencing foreign key {fk}");
                }
                Ok(fk) => schema.relations.push(fk),
                Err(e) if options.drop_dangling_fks => {
                    log::warn!("{db_id}: dropping foreign key: {e}");
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(schema)
}

fn read_foreign_keys(
    conn: &Connection,
    schema: &DatabaseSchema,
    table: &str,
) -> Result<Vec<ForeignKey>, CatalogError> {
    let mut stmt = conn.prepare(
        "SELECT \"table\", \"from\", \"to\", seq FROM pragma_foreign_key_list(?1) ORDER BY id, seq",
    )?;
    let rows = stmt
        .query_map([table], |row| {
            Ok((
                row.get::<_, String>(0)?,
                row.get::<_, String>(1)?,
                row.get::<_, Option<String>>(2)?,
                row.get::<_, i64>(3)?,
            ))
        })?
        .collect::<Result<Vec<_>, _>>()?;

    let mut fks = Vec::with_capacity(rows.len());
    for (parent, from, to, seq) in rows {
        let to = match to {
            Some(to) => to,
            // `REFERENCES parent` without a column list targets the parent's primary key.
            None => primary_key_columns(conn, schema, &parent)?
                .get(usize::try_from(seq).unwrap_or(0))
                .cloned()
                .unwrap_or_default(),
        };
        fks.push(ForeignKey::new(table, &from, &parent, &to));
    }
    Ok(fks)
}

fn primary_key_columns(
    conn: &Connection,
    schema: &DatabaseSchema,
    table: &str,
) -> Result<Vec<String>, CatalogError> {
    let Some(def) = schema.table(table) else {
        return Ok(Vec::new());
    };
    let mut stmt =
        conn.prepare("SELECT name FROM pragma_table_info(?1) WHERE pk > 0 ORDER BY pk")?;
    let cols = stmt
        .query_map([&def.name], |row| row.get::<_, String>(0))?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cols)
}

/// Opens a SQLite file read-only after checking that it is one.
pub(crate) fn open_read_only(db_path: &Path) -> Result<Connection, CatalogError> {
    let mut file = File::open(db_path).map_err(|source| CatalogError::FileNotReadable {
        path: db_path.to_path_buf(),
        source,
    })?;
    let mut header = [0u8; 16];
    let mut filled = 0;
    while filled < header.len() {
        match file.read(&mut header[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(source) => {
                return Err(CatalogError::FileNotReadable {
                    path: db_path.to_path_buf(),
                    source,
                })
            }
        }
    }
    // A zero-length file is a valid empty database.
    if filled != 0 && (filled < header.len() || &header != SQLITE_MAGIC) {
        return Err(CatalogError::NotASqliteFile(db_path.to_path_buf()));
    }
    let conn = Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )?;
    Ok(conn)
}

/// A min or max bound of an ordered column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Integer(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Integer(v) => write!(f, "{v}"),
            Bound::Real(v) => write!(f, "{v}"),
            Bound::Text(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnStatistics {
    TextSample { values: Vec<String> },
    NumericRange { min: Bound, max: Bound },
    Empty,
}

impl fmt::Display for ColumnStatistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnStatistics::TextSample { values } => {
                let quoted: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
                write!(f, "sample values [{}]", quoted.join(", "))
            }
            ColumnStatistics::NumericRange { min, max } => write!(f, "min {min}, max {max}"),
            ColumnStatistics::Empty => f.write_str("no values"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub column: ColumnDef,
    pub statistics: ColumnStatistics,
}

/// Computes value statistics over one read-only connection.
pub struct Profiler {
    conn: Connection,
}

impl Profiler {
    pub fn open(db_path: &Path) -> Result<Self, CatalogError> {
        Ok(Profiler {
            conn: open_read_only(db_path)?,
        })
    }

    /// Profiles a column. The RNG stream is derived from `seed` and the
    /// column's identity, so results do not depend on profiling order.
    pub fn profile(
        &self,
        column: &ColumnDef,
        sample_size: usize,
        seed: u64,
    ) -> Result<ColumnProfile, CatalogError> {
        let exists: bool = self
            .conn
            .query_row(
                "SELECT EXISTS (SELECT 1 FROM pragma_table_info(?1) WHERE name = ?2 COLLATE NOCASE)",
                [&column.table, &column.name],
                |row| row.get(0),
            )
            .map_err(CatalogError::from)?;
        if !exists {
            return Err(CatalogError::ColumnMissing {
                table: column.table.clone(),
                column: column.name.clone(),
            });
        }

        let statistics = match column.declared_type {
            ColumnType::Text => {
                let mut rng = ChaCha8Rng::seed_from_u64(column_seed(seed, column));
                self.sample_text(column, sample_size, &mut rng)?
            }
            ty if ty.is_ordered() => self.min_max(column)?,
            _ => ColumnStatistics::Empty,
        };
        Ok(ColumnProfile {
            column: column.clone(),
            statistics,
        })
    }

    fn sample_text(
        &self,
        column: &ColumnDef,
        sample_size: usize,
        rng: &mut impl Rng,
    ) -> Result<ColumnStatistics, CatalogError> {
        let sql = format!(
            "SELECT DISTINCT {col} FROM {table} WHERE {col} IS NOT NULL",
            col = quote_ident(&column.name),
            table = quote_ident(&column.table)
        );
        let mut stmt = self.conn.prepare(&sql)?;
        let mut rows = stmt.query([])?;
        let mut seen = BTreeSet::new();
        let mut reservoir: Vec<String> = Vec::with_capacity(sample_size);
        let mut count = 0usize;
        while let Some(row) = rows.next()? {
            let Some(value) = value_as_text(row.get_ref(0)?) else {
                continue;
            };
            if value.trim().is_empty() || !seen.insert(value.clone()) {
                continue;
            }
            count += 1;
            if reservoir.len() < sample_size {
                reservoir.push(value);
            } else {
                let slot = rng.random_range(0..count);
                if slot < sample_size {
                    reservoir[slot] = value;
                }
            }
        }
        if reservoir.is_empty() {
            return Ok(ColumnStatistics::Empty);
        }
        reservoir.shuffle(rng);
        let values = reservoir
            .into_iter()
            .map(|v| v.chars().take(SAMPLE_CHAR_LIMIT).collect())
            .collect();
        Ok(ColumnStatistics::TextSample { values })
    }

    fn min_max(&self, column: &ColumnDef) -> Result<ColumnStatistics, CatalogError> {
        let sql = format!(
            "SELECT MIN({col}), MAX({col}) FROM {table} WHERE {col} IS NOT NULL",
            col = quote_ident(&column.name),
            table = quote_ident(&column.table)
        );
        let (min, max) = self.conn.query_row(&sql, [], |row| {
            Ok((bound_from(row.get_ref(0)?), bound_from(row.get_ref(1)?)))
        })?;
        Ok(match (min, max) {
            (Some(min), Some(max)) => ColumnStatistics::NumericRange { min, max },
            _ => ColumnStatistics::Empty,
        })
    }
}

/// Profiles one column with a fresh connection.
pub fn profile_column(
    db_path: &Path,
    column: &ColumnDef,
    sample_size: usize,
    seed: u64,
) -> Result<ColumnProfile, CatalogError> {
    Profiler::open(db_path)?.profile(column, sample_size, seed)
}

/// Profiles every column of a schema, in schema order.
pub fn profile_schema(
    db_path: &Path,
    schema: &DatabaseSchema,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<ColumnProfile>, CatalogError> {
    let profiler = Profiler::open(db_path)?;
    schema
        .columns()
        .map(|c| profiler.profile(c, sample_size, seed))
        .collect()
}

fn column_seed(seed: u64, column: &ColumnDef) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(column.table.to_lowercase().as_bytes());
    hasher.write_u8(0);
    hasher.write(column.name.to_lowercase().as_bytes());
    hasher.finish() ^ seed
}

fn value_as_text(value: ValueRef<'_>) -> Option<String> {
    match value {
        ValueRef::Null | ValueRef::Blob(_) => None,
        ValueRef::Integer(i) => Some(i.to_string()),
        ValueRef::Real(r) => Some(r.to_string()),
        ValueRef::Text(t) => Some(String::from_utf8_lossy(t).into_owned()),
    }
}

fn bound_from(value: ValueRef<'_>) -> Option<Bound> {
    match value {
        ValueRef::Null | ValueRef::Blob(_) => None,
        ValueRef::Integer(i) => Some(Bound::Integer(i)),
        ValueRef::Real(r) => Some(Bound::Real(r)),
        ValueRef::Text(t) => Some(Bound::Text(String::from_utf8_lossy(t).into_owned())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn fixture(ddl: &str) -> (TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(ddl).unwrap();
        (dir, path)
    }

    #[test]
    fn declared_type_mapping() {
        let cases = [
            ("INTEGER", ColumnType::Integer),
            ("bigint", ColumnType::Integer),
            ("VARCHAR(20)", ColumnType::Text),
            ("text", ColumnType::Text),
            ("CLOB", ColumnType::Text),
            ("REAL", ColumnType::Real),
            ("double precision", ColumnType::Real),
            ("FLOAT", ColumnType::Real),
            ("NUMERIC(10,2)", ColumnType::Real),
            ("decimal", ColumnType::Real),
            ("DATE", ColumnType::Date),
            ("datetime", ColumnType::Date),
            ("TIMESTAMP", ColumnType::Date),
            ("BLOB", ColumnType::Blob),
            ("", ColumnType::Other),
            ("boolean", ColumnType::Other),
        ];
        for (decl, expected) in cases {
            assert_eq!(ColumnType::from_declared(decl), expected, "{decl}");
        }
    }

    #[test]
    fn introspects_two_tables_and_one_fk() {
        let (_dir, path) = fixture(
            "CREATE TABLE A (id INTEGER PRIMARY KEY, name TEXT);
             CREATE TABLE B (id INTEGER PRIMARY KEY, a_id INTEGER REFERENCES A(id));",
        );
        let schema = introspect(&path, "toy", None).unwrap();
        assert_eq!(schema.table_names(), vec!["A", "B"]);
        assert_eq!(schema.column_count(), 4);
        assert_eq!(schema.relations, vec![ForeignKey::new("B", "a_id", "A", "id")]);
        assert_eq!(
            schema.column("a", "NAME").unwrap().declared_type,
            ColumnType::Text
        );
    }

    #[test]
    fn fk_without_column_list_targets_primary_key() {
        let (_dir, path) = fixture(
            "CREATE TABLE parent (pid INTEGER PRIMARY KEY, label TEXT);
             CREATE TABLE child (cid INTEGER, p INTEGER REFERENCES parent);",
        );
        let schema = introspect(&path, "x", None).unwrap();
        assert_eq!(
            schema.relations,
            vec![ForeignKey::new("child", "p", "parent", "pid")]
        );
    }

    #[test]
    fn empty_database_has_no_tables() {
        let (_dir, path) = fixture("");
        let schema = introspect(&path, "empty", None).unwrap();
        assert!(schema.tables.is_empty());
        assert!(schema.relations.is_empty());
    }

    #[test]
    fn dangling_fk_is_reported_with_its_endpoints() {
        let (_dir, path) = fixture(
            "CREATE TABLE A (id INTEGER PRIMARY KEY);
             CREATE TABLE B (id INTEGER, a_ref INTEGER REFERENCES A(gone));",
        );
        match introspect(&path, "bad", None) {
            Err(CatalogError::DanglingForeignKey { from, to }) => {
                assert_eq!(from, "B.a_ref");
                assert_eq!(to, "A.gone");
            }
            other => panic!("expected DanglingForeignKey, got {other:?}"),
        }
        let lenient = introspect_with(
            &path,
            "bad",
            &IntrospectOptions {
                descriptions: None,
                drop_dangling_fks: true,
            },
        )
        .unwrap();
        assert!(lenient.relations.is_empty());
    }

    #[test]
    fn views_and_internal_tables_are_excluded() {
        let (_dir, path) = fixture(
            "CREATE TABLE t (id INTEGER PRIMARY KEY AUTOINCREMENT, v TEXT);
             INSERT INTO t (v) VALUES ('a');
             CREATE VIEW tv AS SELECT v FROM t;",
        );
        let schema = introspect(&path, "x", None).unwrap();
        assert_eq!(schema.table_names(), vec!["t"]);
    }

    #[test]
    fn missing_and_non_sqlite_files() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.sqlite");
        assert!(matches!(
            introspect(&missing, "x", None),
            Err(CatalogError::FileNotReadable { .. })
        ));
        let junk = dir.path().join("junk.sqlite");
        std::fs::write(&junk, b"this is certainly not a database file").unwrap();
        assert!(matches!(
            introspect(&junk, "x", None),
            Err(CatalogError::NotASqliteFile(_))
        ));
    }

    #[test]
    fn descriptions_attach_case_insensitively() {
        let (_dir, path) = fixture("CREATE TABLE district (A2 TEXT, A3 TEXT);");
        let mut map = DescriptionMap::new();
        map.insert("District", "a2", "district name");
        let schema = introspect(&path, "fin", Some(&map)).unwrap();
        let a2 = schema.column("district", "A2").unwrap();
        assert_eq!(a2.description.as_deref(), Some("district name"));
        assert_eq!(schema.column("district", "A3").unwrap().description, None);
    }

    #[test]
    fn bird_csv_tolerates_bom_crlf_and_quoted_commas() {
        let csv = "\u{feff}original_column_name,column_name,column_description,data_format\r\n\
                   A2,district_name,\"district name, as registered\",text\r\n\
                   A3,,region,text\r\n";
        let mut map = DescriptionMap::new();
        map.read_bird_csv("district", csv.as_bytes()).unwrap();
        assert_eq!(map.get("district", "a2"), Some("district name, as registered"));
        assert_eq!(map.get("district", "A3"), Some("region"));
    }

    #[test]
    fn profiles_text_numeric_and_null_columns() {
        let (_dir, path) = fixture(
            "CREATE TABLE p (name TEXT, score INTEGER, blank REAL, born DATE);
             INSERT INTO p VALUES ('Alice', 3, NULL, '1990-05-01'),
                                  ('Bob', 9, NULL, '1985-12-31'),
                                  ('Alice', 1, NULL, NULL);",
        );
        let schema = introspect(&path, "p", None).unwrap();
        let col = |n: &str| schema.column("p", n).unwrap().clone();

        let name = profile_column(&path, &col("name"), 5, 7).unwrap();
        match name.statistics {
            ColumnStatistics::TextSample { values } => {
                let got: BTreeSet<_> = values.iter().map(String::as_str).collect();
                assert_eq!(got, BTreeSet::from(["Alice", "Bob"]));
            }
            other => panic!("unexpected {other:?}"),
        }

        let score = profile_column(&path, &col("score"), 5, 7).unwrap();
        assert_eq!(
            score.statistics,
            ColumnStatistics::NumericRange {
                min: Bound::Integer(1),
                max: Bound::Integer(9)
            }
        );

        let blank = profile_column(&path, &col("blank"), 5, 7).unwrap();
        assert_eq!(blank.statistics, ColumnStatistics::Empty);

        let born = profile_column(&path, &col("born"), 5, 7).unwrap();
        assert_eq!(
            born.statistics,
            ColumnStatistics::NumericRange {
                min: Bound::Text("1985-12-31".into()),
                max: Bound::Text("1990-05-01".into())
            }
        );
    }

    #[test]
    fn text_samples_are_truncated_and_seeded() {
        let long = "x".repeat(250);
        let mut ddl = String::from("CREATE TABLE t (v TEXT);");
        for i in 0..40 {
            ddl.push_str(&format!("INSERT INTO t VALUES ('{long}{i}');"));
        }
        let (_dir, path) = fixture(&ddl);
        let column = ColumnDef::new("t", "v", "TEXT");
        let a = profile_column(&path, &column, 3, 42).unwrap();
        let b = profile_column(&path, &column, 3, 42).unwrap();
        assert_eq!(a, b);
        let ColumnStatistics::TextSample { values } = a.statistics else {
            panic!("expected a text sample");
        };
        assert_eq!(values.len(), 3);
        assert!(values.iter().all(|v| v.chars().count() <= SAMPLE_CHAR_LIMIT));
    }

    #[test]
    fn profiling_a_missing_column_fails() {
        let (_dir, path) = fixture("CREATE TABLE t (v TEXT);");
        let column = ColumnDef::new("t", "w", "TEXT");
        assert!(matches!(
            profile_column(&path, &column, 3, 0),
            Err(CatalogError::ColumnMissing { .. })
        ));
    }

    #[test]
    fn schema_constructor_rejects_duplicates_and_self_loops() {
        let table = |name: &str, cols: &[&str]| TableDef {
            name: name.into(),
            columns: cols.iter().map(|c| ColumnDef::new(name, *c, "INT")).collect(),
        };
        assert!(DatabaseSchema::new("x", vec![table("a", &["id"]), table("A", &["id"])], vec![]).is_err());
        assert!(DatabaseSchema::new("x", vec![table("a", &["id", "ID"])], vec![]).is_err());
        assert!(DatabaseSchema::new(
            "x",
            vec![table("a", &["id"])],
            vec![ForeignKey::new("a", "id", "a", "id")]
        )
        .is_err());
        let ok = DatabaseSchema::new(
            "x",
            vec![table("a", &["id"]), table("b", &["a_id"])],
            vec![ForeignKey::new("B", "A_ID", "a", "ID")],
        )
        .unwrap();
        assert_eq!(ok.relations[0], ForeignKey::new("b", "a_id", "a", "id"));
    }

    #[test]
    fn ddl_lists_tables_and_keys() {
        let (_dir, path) = fixture(
            "CREATE TABLE A (id INTEGER PRIMARY KEY, name TEXT);
             CREATE TABLE B (id INTEGER PRIMARY KEY, a_id INTEGER REFERENCES A(id));",
        );
        let ddl = introspect(&path, "toy", None).unwrap().to_ddl();
        assert!(ddl.contains("CREATE TABLE \"B\" (\n  \"id\" INTEGER,\n  \"a_id\" INTEGER,\n  FOREIGN KEY (\"a_id\") REFERENCES \"A\"(\"id\")\n);"));
    }
}
