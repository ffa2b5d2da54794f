//! Synthetic inputs for the tool benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqlagent::catalog::{ColumnDef, DatabaseSchema, ForeignKey, TableDef};
use sqlagent::value_index::ValueDoc;

const WORDS: &[&str] = &[
    "north", "south", "east", "west", "central", "bohemia", "moravia", "prague", "brno", "city",
    "town", "river", "hill", "park", "new", "old", "saint", "upper", "lower", "district",
];

/// `tables` tables of `cols` text columns each, joined in a chain with a few
/// random shortcuts.
pub fn chain_schema(tables: usize, cols: usize, seed: u64) -> DatabaseSchema {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let defs = (0..tables)
        .map(|t| TableDef {
            name: format!("t{t}"),
            columns: (0..cols)
                .map(|c| ColumnDef::new(format!("t{t}"), format!("{}_{c}", WORDS[(t + c) % WORDS.len()]), "TEXT"))
                .collect(),
        })
        .collect::<Vec<_>>();
    let mut fks = Vec::new();
    for t in 1..tables {
        fks.push(ForeignKey::new(&format!("t{t}"), &defs[t].columns[0].name, &format!("t{}", t - 1), &defs[t - 1].columns[1 % cols].name));
    }
    for _ in 0..tables / 4 {
        let (a, b) = (rng.random_range(0..tables), rng.random_range(0..tables));
        if a != b {
            fks.push(ForeignKey::new(&format!("t{a}"), &defs[a].columns[cols - 1].name, &format!("t{b}"), &defs[b].columns[0].name));
        }
    }
    DatabaseSchema::new("bench", defs, fks).expect("generated schema is consistent")
}

/// `n` distinct multi-word values spread over the schema's columns.
pub fn value_docs(schema: &DatabaseSchema, n: usize, seed: u64) -> Vec<ValueDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<&ColumnDef> = schema.columns().collect();
    (0..n)
        .map(|i| {
            let column = columns[rng.random_range(0..columns.len())];
            let words: Vec<&str> = (0..rng.random_range(1..5)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            ValueDoc {
                table: column.table.clone(),
                column: column.name.clone(),
                value: format!("{} {i}", words.join(" ")),
            }
        })
        .collect()
}
