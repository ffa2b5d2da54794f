//! Join-path search over the schema viewed as an undirected column graph.
//!
//! Nodes are columns, written `{column}.{table}`. Columns of the same table
//! are mutually connected by free edges; every foreign key adds an edge that
//! costs one join. Paths minimise joins first, then hops, and among those
//! pick the lexicographically smallest node sequence.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{self, CacheError};
use crate::catalog::DatabaseSchema;

const HEADER: &str = "SQLAGENT schema-graph v1";

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown node {id}{}", suggestion.as_ref().map(|s| format!(", did you mean {s}?")).unwrap_or_default())]
    UnknownNode { id: String, suggestion: Option<String> },
    #[error("ambiguous node {id}: could be {}", candidates.join(" or "))]
    AmbiguousNode { id: String, candidates: Vec<String> },
    #[error("no join path between table {start_table} and table {end_table}; they lie in disconnected parts of the schema ({} | {})", start_component.join(", "), end_component.join(", "))]
    NoPath {
        start_table: String,
        end_table: String,
        start_component: Vec<String>,
        end_component: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub column: String,
    pub table: String,
}

impl NodeId {
    pub fn new(column: impl Into<String>, table: impl Into<String>) -> Self {
        NodeId {
            column: column.into(),
            table: table.into(),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.column, self.table)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinPath {
    pub nodes: Vec<NodeId>,
    pub join_count: usize,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaGraph {
    pub db_id: String,
    pub nodes: Vec<NodeId>,
    /// Table name per table index.
    pub tables: Vec<String>,
    /// Table index of each node.
    node_table: Vec<usize>,
    /// Node indices of each table, in schema column order.
    table_nodes: Vec<Vec<usize>>,
    /// One undirected edge per foreign key, as node index pairs.
    pub fk_edges: Vec<(usize, usize)>,
    fk_adjacent: Vec<Vec<usize>>,
}

type Cost = (usize, usize);

impl SchemaGraph {
    pub fn build(schema: &DatabaseSchema) -> Self {
        let mut nodes = Vec::new();
        let mut node_table = Vec::new();
        let mut table_nodes = Vec::new();
        let mut lookup = HashMap::new();
        for (ti, table) in schema.tables.iter().enumerate() {
            let mut members = Vec::with_capacity(table.columns.len());
            for column in &table.columns {
                let idx = nodes.len();
                lookup.insert(
                    (table.name.to_lowercase(), column.name.to_lowercase()),
                    idx,
                );
                nodes.push(NodeId::new(&column.name, &table.name));
                node_table.push(ti);
                members.push(idx);
            }
            table_nodes.push(members);
        }
        let mut fk_edges = Vec::with_capacity(schema.relations.len());
        let mut fk_adjacent = vec![Vec::new(); nodes.len()];
        for fk in &schema.relations {
            let a = lookup[&(fk.from_table.to_lowercase(), fk.from_column.to_lowercase())];
            let b = lookup[&(fk.to_table.to_lowercase(), fk.to_column.to_lowercase())];
            fk_edges.push((a, b));
            fk_adjacent[a].push(b);
            fk_adjacent[b].push(a);
        }
        for adj in &mut fk_adjacent {
            adj.sort_unstable();
            adj.dedup();
        }
        SchemaGraph {
            db_id: schema.db_id.clone(),
            nodes,
            tables: schema.tables.iter().map(|t| t.name.clone()).collect(),
            node_table,
            table_nodes,
            fk_edges,
            fk_adjacent,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of free edges in the per-table cliques.
    pub fn intra_table_edge_count(&self) -> usize {
        self.table_nodes
            .iter()
            .map(|m| m.len() * m.len().saturating_sub(1) / 2)
            .sum()
    }

    pub fn index_of(&self, node: &NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| {
            n.table.eq_ignore_ascii_case(&node.table) && n.column.eq_ignore_ascii_case(&node.column)
        })
    }

    /// Parses a `{column}.{table}` id naming an existing node.
    pub fn parse_node(&self, text: &str) -> Result<NodeId, GraphError> {
        let matches = self.matches(text, false);
        self.pick(text, matches)
    }

    /// Like [`parse_node`](Self::parse_node) but also accepts `{table}.{column}`.
    /// An id valid under both readings (naming different nodes) is rejected.
    pub fn resolve_node(&self, text: &str) -> Result<NodeId, GraphError> {
        let matches = self.matches(text, true);
        self.pick(text, matches)
    }

    fn matches(&self, text: &str, either_order: bool) -> BTreeSet<usize> {
        let text = text.trim();
        let mut found = BTreeSet::new();
        for (pos, _) in text.match_indices('.') {
            let (left, right) = (unquote(&text[..pos]), unquote(&text[pos + 1..]));
            if let Some(i) = self.index_of(&NodeId::new(left, right)) {
                found.insert(i);
            }
            if either_order {
                if let Some(i) = self.index_of(&NodeId::new(right, left)) {
                    found.insert(i);
                }
            }
        }
        found
    }

    fn pick(&self, text: &str, matches: BTreeSet<usize>) -> Result<NodeId, GraphError> {
        match matches.len() {
            1 => Ok(self.nodes[*matches.first().unwrap()].clone()),
            0 => Err(GraphError::UnknownNode {
                id: text.to_string(),
                suggestion: self.suggest(text),
            }),
            _ => Err(GraphError::AmbiguousNode {
                id: text.to_string(),
                candidates: matches.iter().map(|&i| self.nodes[i].to_string()).collect(),
            }),
        }
    }

    fn suggest(&self, text: &str) -> Option<String> {
        let needle = text.trim().to_lowercase();
        self.nodes
            .iter()
            .map(|n| {
                let id = n.to_string();
                (strsim::levenshtein(&needle, &id.to_lowercase()), id)
            })
            .min()
            .map(|(_, id)| id)
    }

    fn neighbours(&self, u: usize) -> impl Iterator<Item = (usize, Cost)> + '_ {
        let same_table = self.table_nodes[self.node_table[u]]
            .iter()
            .filter(move |&&v| v != u)
            .map(|&v| (v, (0, 1)));
        let joins = self.fk_adjacent[u]
            .iter()
            .filter(move |&&v| self.node_table[v] != self.node_table[u])
            .map(|&v| (v, (1, 1)));
        same_table.chain(joins)
    }

    /// (joins, hops) distance from `source` to every node.
    fn distances(&self, source: usize) -> Vec<Option<Cost>> {
        let mut dist: Vec<Option<Cost>> = vec![None; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = Some((0, 0));
        heap.push(Reverse(((0, 0), source)));
        while let Some(Reverse((cost, u))) = heap.pop() {
            if dist[u].is_some_and(|d| d < cost) {
                continue;
            }
            for (v, step) in self.neighbours(u) {
                let next = (cost.0 + step.0, cost.1 + step.1);
                if dist[v].is_none_or(|d| next < d) {
                    dist[v] = Some(next);
                    heap.push(Reverse((next, v)));
                }
            }
        }
        dist
    }

    pub fn find_shortest_path(&self, start: &NodeId, end: &NodeId) -> Result<JoinPath, GraphError> {
        let unknown = |n: &NodeId| GraphError::UnknownNode {
            id: n.to_string(),
            suggestion: self.suggest(&n.to_string()),
        };
        let s = self.index_of(start).ok_or_else(|| unknown(start))?;
        let e = self.index_of(end).ok_or_else(|| unknown(end))?;

        let to_end = self.distances(e);
        let Some(mut remaining) = to_end[s] else {
            let reach = self.distances(s);
            return Err(GraphError::NoPath {
                start_table: self.tables[self.node_table[s]].clone(),
                end_table: self.tables[self.node_table[e]].clone(),
                start_component: self.component_tables(&reach),
                end_component: self.component_tables(&to_end),
            });
        };

        // Walk the optimal-path DAG, always stepping to the smallest id.
        let mut path = vec![s];
        let mut u = s;
        while u != e {
            let mut best: Option<(String, usize, Cost)> = None;
            for (v, step) in self.neighbours(u) {
                let Some(dv) = to_end[v] else { continue };
                if (dv.0 + step.0, dv.1 + step.1) != remaining {
                    continue;
                }
                let id = self.nodes[v].to_string();
                if best.as_ref().is_none_or(|(b, _, _)| id < *b) {
                    best = Some((id, v, dv));
                }
            }
            let (_, v, dv) = best.expect("distance labels admit a next hop");
            path.push(v);
            u = v;
            remaining = dv;
        }

        let nodes: Vec<NodeId> = path.iter().map(|&i| self.nodes[i].clone()).collect();
        let join_count = path
            .windows(2)
            .filter(|w| self.node_table[w[0]] != self.node_table[w[1]])
            .count();
        let rendered = self.render(&path);
        Ok(JoinPath {
            nodes,
            join_count,
            rendered,
        })
    }

    fn component_tables(&self, reach: &[Option<Cost>]) -> Vec<String> {
        let tables: BTreeSet<usize> = reach
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(i, _)| self.node_table[i])
            .collect();
        tables.into_iter().map(|t| self.tables[t].clone()).collect()
    }

    fn render(&self, path: &[usize]) -> String {
        let first = self.node_table[path[0]];
        let mut out = sql_ident(&self.tables[first]);
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ta, tb) = (self.node_table[a], self.node_table[b]);
            if ta == tb {
                continue;
            }
            out.push_str(&format!(
                " JOIN {tb} ON {ta}.{ca} = {tb}.{cb}",
                ta = sql_ident(&self.tables[ta]),
                tb = sql_ident(&self.tables[tb]),
                ca = sql_ident(&self.nodes[a].column),
                cb = sql_ident(&self.nodes[b].column),
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        cache::write_versioned(path, HEADER, self)
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        cache::read_versioned(path, HEADER)
    }
}

fn unquote(part: &str) -> &str {
    let part = part.trim();
    for (open, close) in [('`', '`'), ('"', '"'), ('[', ']'), ('\'', '\'')] {
        if part.len() >= 2 && part.starts_with(open) && part.ends_with(close) {
            return &part[1..part.len() - 1];
        }
    }
    part
}

/// Backtick-quotes identifiers that are not plain words.
fn sql_ident(name: &str) -> String {
    let plain = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("`{}`", name.replace('`', "``"))
    }
}
