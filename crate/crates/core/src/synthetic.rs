//! Seeded random signed graphs: plain Erdős–Rényi graphs for tests and a
//! two-faction trust network with heavy-tailed degrees.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SignedGraph;

/// Each pair is linked with probability `p`; each link is positive with
/// probability `positive`.
pub fn random_signed(n: usize, p: f64, positive: f64, seed: u64) -> SignedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                triples.push((u, v, if rng.random_bool(positive) { 1 } else { -1 }));
            }
        }
    }
    SignedGraph::from_edges(n, triples).expect("pairs are distinct and in range")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustNetworkConfig {
    pub nodes: usize,
    pub edges: usize,
    /// Share of nodes in the minority (distrusted) faction.
    pub minority: f64,
    /// Probability that a link's sign disagrees with the faction rule.
    pub noise: f64,
    /// Probability that a new link closes a wedge instead of being drawn by
    /// node weight.
    pub closure: f64,
    /// Power-law exponent of the node weights.
    pub exponent: f64,
}

impl TrustNetworkConfig {
    /// Size and sign balance close to the Bitcoin-Alpha trust network.
    pub fn bitcoin_alpha_like() -> Self {
        Self { nodes: 3783, edges: 14124, minority: 0.035, noise: 0.02, closure: 0.3, exponent: 2.3 }
    }

    pub fn scaled(&self, nodes: usize) -> Self {
        let edges = (self.edges as f64 * nodes as f64 / self.nodes as f64).round() as usize;
        Self { nodes, edges, ..self.clone() }
    }
}

/// Links inside a faction are positive and across factions negative, up to
/// `noise`. Node weights follow a power law; a `closure` share of the links
/// close open wedges.
pub fn trust_network(cfg: &TrustNetworkConfig, seed: u64) -> Result<SignedGraph> {
    let n = cfg.nodes;
    if n < 3 || cfg.edges > n * (n - 1) / 4 {
        return Err(Error::invalid(format!("{} edges on {n} nodes is too dense or too small", cfg.edges)));
    }
    if !(cfg.exponent > 1.0) {
        return Err(Error::invalid("power-law exponent must exceed 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-1.0 / (cfg.exponent - 1.0))).collect();
    weights.shuffle(&mut rng);
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let minority: Vec<bool> = (0..n).map(|_| rng.random_bool(cfg.minority)).collect();

    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(cfg.edges);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut list: Vec<(usize, usize)> = Vec::with_capacity(cfg.edges);
    while list.len() < cfg.edges {
        let (u, v) = if !list.is_empty() && rng.random_bool(cfg.closure) {
            let (a, b) = list[rng.random_range(0..list.len())];
            let (u, w) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            (u, adj[w][rng.random_range(0..adj[w].len())])
        } else {
            (pick.sample(&mut rng), pick.sample(&mut rng))
        };
        if u == v || !seen.insert((u.min(v), u.max(v))) {
            continue;
        }
        adj[u].push(v);
        adj[v].push(u);
        list.push((u.min(v), u.max(v)));
    }
    let triples = list.into_iter().map(|(u, v)| {
        let agree = minority[u] == minority[v];
        let flip = rng.random_bool(cfg.noise);
        (u, v, if agree != flip { 1 } else { -1 })
    });
    SignedGraph::from_edges(n, triples)
}
