//! Undirected signed graphs and the train/test view used by attacks.

mod io;
mod sample;

pub use io::{from_json, load_edge_list, read_json, to_json, write_json, write_plain, EdgeListFormat, LoadedGraph};
pub use sample::{
    induced_subgraph, largest_connected_component, sample_subgraph_corpus, snowball_subsample,
    split_edges, EdgeSplit, GraphCorpus, Subgraph,
};

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree floor used wherever a degree is inverted.
pub const DEGREE_FLOOR: f64 = 1e-9;

/// An undirected signed edge with `u < v` and sign ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub sign: i8,
}

impl Edge {
    pub fn pair(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    pub fn is_positive(&self) -> bool {
        self.sign > 0
    }
}

/// Immutable signed graph on nodes `0..n`. Edges are kept sorted by `(u, v)`
/// with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedGraph {
    n: usize,
    edges: Vec<Edge>,
    index: HashMap<(usize, usize), usize>,
    neighbors: Vec<Vec<(usize, i8)>>,
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl SignedGraph {
    /// Builds a graph from `(u, v, sign)` triples. Rejects self-loops,
    /// repeated unordered pairs, out-of-range ids and signs other than ±1.
    pub fn from_edges(n: usize, triples: impl IntoIterator<Item = (usize, usize, i8)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (u, v, s) in triples {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            if s != 1 && s != -1 {
                return Err(Error::invalid(format!("sign {s} on edge ({u}, {v}) is not ±1")));
            }
            let (a, b) = ordered(u, v);
            edges.push(Edge { u: a, v: b, sign: s });
        }
        edges.sort();
        for w in edges.windows(2) {
            if w[0].pair() == w[1].pair() {
                return Err(Error::invalid(format!("duplicate edge {:?}", w[0].pair())));
            }
        }
        Ok(Self::from_sorted(n, edges))
    }

    fn from_sorted(n: usize, edges: Vec<Edge>) -> Self {
        let mut index = HashMap::with_capacity(edges.len());
        let mut neighbors = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            index.insert(e.pair(), k);
            neighbors[e.u].push((e.v, e.sign));
            neighbors[e.v].push((e.u, e.sign));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self { n, edges, index, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> Edge {
        self.edges[k]
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.index.get(&ordered(u, v)).copied()
    }

    pub fn sign(&self, u: usize, v: usize) -> Option<i8> {
        self.edge_index(u, v).map(|k| self.edges[k].sign)
    }

    /// Sorted `(neighbor, sign)` list of `u`.
    pub fn neighbors(&self, u: usize) -> &[(usize, i8)] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    /// Unsigned degree vector `d[i] = Σ_j |A|[i,j]`.
    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn positive_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_positive()).count()
    }

    pub fn positive_ratio(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.positive_edges() as f64 / self.edges.len() as f64
    }

    /// Dense signed adjacency `A`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.u, e.v)] = e.sign as f64;
            a[(e.v, e.u)] = e.sign as f64;
        }
        a
    }

    /// Dense unsigned adjacency `|A|`.
    pub fn abs_adjacency(&self) -> DMatrix<f64> {
        self.adjacency().abs()
    }

    /// Returns a copy with the sign of `(u, v)` negated.
    pub fn flip_sign(&self, u: usize, v: usize) -> Result<Self> {
        let k = self.edge_index(u, v).ok_or(Error::MissingEdge { u, v })?;
        let mut edges = self.edges.clone();
        edges[k].sign = -edges[k].sign;
        Ok(Self::from_sorted(self.n, edges))
    }

    /// Returns a copy with every listed edge flipped once.
    pub fn flip_signs(&self, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = self.edges.clone();
        for &(u, v) in pairs {
            let k = self.edge_index(u, v).ok_or(Error::MissingEdge { u, v })?;
            edges[k].sign = -edges[k].sign;
        }
        Ok(Self::from_sorted(self.n, edges))
    }

    /// Copy with all signs replaced by `sign_of(edge index)`.
    pub fn with_signs(&self, mut sign_of: impl FnMut(usize) -> i8) -> Self {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| Edge { sign: sign_of(k), ..*e })
            .collect();
        Self::from_sorted(self.n, edges)
    }
}

/// The attacker/analyst view of a graph: every edge's existence is known,
/// but test-link signs are hidden (zero in the signed adjacency).
#[derive(Debug, Clone)]
pub struct ObservedGraph {
    /// `A⁰` (or `Aᵃ` once poisoned): training signs, zeros on test links.
    pub signed: DMatrix<f64>,
    /// `|A|` over all edges, test links included.
    pub abs: DMatrix<f64>,
    /// Unsigned degrees from `|A|`, floored at [`DEGREE_FLOOR`].
    pub degrees: DVector<f64>,
    pub train_links: Vec<(usize, usize)>,
    pub test_links: Vec<(usize, usize)>,
}

impl ObservedGraph {
    pub fn new(g: &SignedGraph, split: &EdgeSplit) -> Self {
        let mut signed = DMatrix::zeros(g.n(), g.n());
        for &k in &split.train {
            let e = g.edge(k);
            signed[(e.u, e.v)] = e.sign as f64;
            signed[(e.v, e.u)] = e.sign as f64;
        }
        let abs = g.abs_adjacency();
        let degrees = DVector::from_iterator(
            g.n(),
            g.degrees().into_iter().map(|d| (d as f64).max(DEGREE_FLOOR)),
        );
        Self {
            signed,
            abs,
            degrees,
            train_links: split.train.iter().map(|&k| g.edge(k).pair()).collect(),
            test_links: split.test.iter().map(|&k| g.edge(k).pair()).collect(),
        }
    }

    /// View with every sign visible and no test links.
    pub fn fully_signed(g: &SignedGraph) -> Self {
        Self::new(g, &EdgeSplit::all_train(g))
    }

    pub fn n(&self) -> usize {
        self.signed.nrows()
    }

    pub fn with_signed(&self, signed: DMatrix<f64>) -> Self {
        Self { signed, ..self.clone() }
    }

    /// `|Aᵃ|` restricted to the visible (training) links.
    pub fn visible_abs(&self) -> DMatrix<f64> {
        self.signed.abs()
    }

    pub fn volume(&self) -> f64 {
        self.degrees.sum()
    }
}
