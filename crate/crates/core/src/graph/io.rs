use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::SignedGraph;
use crate::error::{Error, Result};

/// Row layout of an edge-list file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeListFormat {
    /// `u,v,s` with `s ∈ {+1, -1}`.
    Plain,
    /// `u,v,rating[,time]`; the sign is the sign of the rating.
    Rated,
}

impl std::str::FromStr for EdgeListFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "rated" => Ok(Self::Rated),
            other => Err(Error::invalid(format!("unknown edge-list format '{other}'"))),
        }
    }
}

/// A graph read from disk plus ingestion bookkeeping.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: SignedGraph,
    /// `original_ids[new] = id in the file`.
    pub original_ids: Vec<i64>,
    /// Directed rows kept after duplicate resolution, as `(u, v, sign)` on
    /// the new labels.
    pub directed_links: Vec<(usize, usize, i8)>,
    pub rows_read: usize,
    pub zero_ratings: usize,
    pub self_loops: usize,
    /// Reciprocal pairs whose ratings summed to exactly zero.
    pub cancelled_pairs: usize,
}

fn fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads an edge list. Duplicate directed rows keep the last occurrence;
/// reciprocal rows merge into one undirected edge signed by the sum of both
/// values, and an exact-zero sum drops the pair. Nodes are relabeled to
/// `0..n` in ascending order of their original ids.
pub fn load_edge_list(path: impl AsRef<Path>, format: EdgeListFormat) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, format)
}

pub(crate) fn parse_edge_list(text: &str, format: EdgeListFormat) -> Result<LoadedGraph> {
    let mut directed: HashMap<(i64, i64), f64> = HashMap::new();
    let mut ids = BTreeSet::new();
    let mut rows_read = 0;
    let mut zero_ratings = 0;
    let mut self_loops = 0;
    let mut seen_data = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let cols = fields(line);
        let parse_id = |s: &str| s.parse::<i64>();
        if !seen_data {
            seen_data = true;
            if cols.len() >= 2 && (parse_id(cols[0]).is_err() || parse_id(cols[1]).is_err()) {
                continue; // header
            }
        }
        let line_no = lineno + 1;
        let bad = |message: String| Error::Parse { line: line_no, message };
        let expected = match format {
            EdgeListFormat::Plain => 3..=3,
            EdgeListFormat::Rated => 3..=4,
        };
        if !expected.contains(&cols.len()) {
            return Err(bad(format!("expected {expected:?} columns, found {}", cols.len())));
        }
        let u = parse_id(cols[0]).map_err(|e| bad(format!("node id '{}': {e}", cols[0])))?;
        let v = parse_id(cols[1]).map_err(|e| bad(format!("node id '{}': {e}", cols[1])))?;
        let value = match format {
            EdgeListFormat::Plain => {
                let s: i64 = cols[2].parse().map_err(|e| bad(format!("sign '{}': {e}", cols[2])))?;
                if s != 1 && s != -1 {
                    return Err(bad(format!("sign must be +1 or -1, found {s}")));
                }
                s as f64
            }
            EdgeListFormat::Rated => {
                let r: f64 = cols[2].parse().map_err(|e| bad(format!("rating '{}': {e}", cols[2])))?;
                if !r.is_finite() {
                    return Err(bad(format!("non-finite rating {r}")));
                }
                if r == 0.0 {
                    zero_ratings += 1;
                    continue;
                }
                r
            }
        };
        rows_read += 1;
        ids.insert(u);
        ids.insert(v);
        if u == v {
            self_loops += 1;
            continue;
        }
        directed.insert((u, v), value);
    }
    if zero_ratings > 0 {
        warn!("rejected {zero_ratings} rows with zero rating");
    }

    let original_ids: Vec<i64> = ids.into_iter().collect();
    let relabel: HashMap<i64, usize> =
        original_ids.iter().enumerate().map(|(new, &old)| (old, new)).collect();

    let mut undirected: HashMap<(usize, usize), f64> = HashMap::new();
    let mut directed_links = Vec::with_capacity(directed.len());
    for (&(u, v), &value) in &directed {
        let (a, b) = (relabel[&u], relabel[&v]);
        directed_links.push((a, b, if value > 0.0 { 1 } else { -1 }));
        *undirected.entry((a.min(b), a.max(b))).or_insert(0.0) += value;
    }
    directed_links.sort_unstable();

    let mut cancelled_pairs = 0;
    let mut triples = Vec::with_capacity(undirected.len());
    for ((a, b), sum) in undirected {
        if sum == 0.0 {
            cancelled_pairs += 1;
        } else {
            triples.push((a, b, if sum > 0.0 { 1 } else { -1 }));
        }
    }
    // Drop directed rows whose undirected pair cancelled out.
    let graph = SignedGraph::from_edges(original_ids.len(), triples)?;
    directed_links.retain(|&(a, b, _)| graph.edge_index(a, b).is_some());

    Ok(LoadedGraph {
        graph,
        original_ids,
        directed_links,
        rows_read,
        zero_ratings,
        self_loops,
        cancelled_pairs,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphDump {
    n: usize,
    edges: Vec<(usize, usize, i8)>,
}

/// Canonical JSON dump `{"n": .., "edges": [[u, v, s], ...]}` ordered by
/// `(u, v)` with `u < v`.
pub fn write_json(g: &SignedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(g)?).map_err(|e| Error::io(path, e))
}

pub fn to_json(g: &SignedGraph) -> Result<String> {
    let dump = GraphDump { n: g.n(), edges: g.edges().iter().map(|e| (e.u, e.v, e.sign)).collect() };
    Ok(serde_json::to_string(&dump)?)
}

pub fn read_json(path: impl AsRef<Path>) -> Result<SignedGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

pub fn from_json(text: &str) -> Result<SignedGraph> {
    let dump: GraphDump = serde_json::from_str(text)?;
    SignedGraph::from_edges(dump.n, dump.edges)
}

/// Plain `u,v,s` CSV with a header row.
pub fn write_plain(g: &SignedGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("u,v,s\n");
    for e in g.edges() {
        out.push_str(&format!("{},{},{}\n", e.u, e.v, e.sign));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
