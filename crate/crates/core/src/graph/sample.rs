use std::collections::VecDeque;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SignedGraph;
use crate::error::{Error, Result};

/// Partition of a graph's edges into visible training links and hidden test
/// links. Indices refer to [`SignedGraph::edges`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Ground-truth signs of `test`, in the same order. Evaluation only.
    pub hidden_signs: Vec<i8>,
}

impl EdgeSplit {
    /// Validates that `train` and `test` are disjoint and cover every edge.
    pub fn new(g: &SignedGraph, mut train: Vec<usize>, mut test: Vec<usize>) -> Result<Self> {
        train.sort_unstable();
        test.sort_unstable();
        let mut seen = vec![false; g.num_edges()];
        for &k in train.iter().chain(&test) {
            if k >= g.num_edges() || seen[k] {
                return Err(Error::invalid(format!("edge index {k} repeated or out of range")));
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split does not cover every edge"));
        }
        let hidden_signs = test.iter().map(|&k| g.edge(k).sign).collect();
        Ok(Self { train, test, hidden_signs })
    }

    pub fn all_train(g: &SignedGraph) -> Self {
        Self { train: (0..g.num_edges()).collect(), test: Vec::new(), hidden_signs: Vec::new() }
    }
}

/// Uniform seeded split with `round(test_fraction · |E|)` test links.
pub fn split_edges(g: &SignedGraph, test_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let m = g.num_edges();
    let n_test = (test_fraction * m as f64).round() as usize;
    if n_test == 0 || n_test >= m {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} gives {n_test} test links out of {m}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[..n_test].to_vec();
    let train = order[n_test..].to_vec();
    EdgeSplit::new(g, train, test)
}

/// A subgraph together with the map from its node ids to the parent's.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: SignedGraph,
    /// `node_map[new] = old`.
    pub node_map: Vec<usize>,
}

/// Subgraph induced on `nodes`, relabeled in ascending order of the parent
/// ids.
pub fn induced_subgraph(g: &SignedGraph, nodes: &[usize]) -> Subgraph {
    let mut node_map = nodes.to_vec();
    node_map.sort_unstable();
    node_map.dedup();
    let mut new_id = vec![usize::MAX; g.n()];
    for (new, &old) in node_map.iter().enumerate() {
        new_id[old] = new;
    }
    let triples = g
        .edges()
        .iter()
        .filter(|e| new_id[e.u] != usize::MAX && new_id[e.v] != usize::MAX)
        .map(|e| (new_id[e.u], new_id[e.v], e.sign));
    let graph = SignedGraph::from_edges(node_map.len(), triples).expect("induced edges are valid");
    Subgraph { graph, node_map }
}

/// Induced subgraph on the largest connected component. Equal sizes are
/// resolved in favor of the component with the smallest node id.
pub fn largest_connected_component(g: &SignedGraph) -> Subgraph {
    let n = g.n();
    let mut comp = vec![usize::MAX; n];
    let mut best: Option<(usize, usize)> = None; // (size, label)
    let mut label = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = label;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &(w, _) in g.neighbors(u) {
                if comp[w] == usize::MAX {
                    comp[w] = label;
                    queue.push_back(w);
                }
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, label));
        }
        label += 1;
    }
    let keep: Vec<usize> = match best {
        Some((_, l)) => (0..n).filter(|&u| comp[u] == l).collect(),
        None => Vec::new(),
    };
    induced_subgraph(g, &keep)
}

/// Collection of clean graphs used to fit detectors.
#[derive(Debug, Clone)]
pub struct GraphCorpus {
    pub graphs: Vec<SignedGraph>,
    pub source: String,
    pub sizes: Vec<usize>,
    pub per_size: usize,
    pub seed: u64,
}

/// For each size, `per_size` times: sample that many nodes uniformly without
/// replacement and keep the largest component of the induced subgraph.
pub fn sample_subgraph_corpus(
    g: &SignedGraph,
    sizes: &[usize],
    per_size: usize,
    seed: u64,
    source: &str,
) -> Result<GraphCorpus> {
    if let Some(&bad) = sizes.iter().find(|&&s| s > g.n()) {
        return Err(Error::invalid(format!("sample size {bad} exceeds node count {}", g.n())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(sizes.len() * per_size);
    for &size in sizes {
        for _ in 0..per_size {
            let nodes = index::sample(&mut rng, g.n(), size).into_vec();
            let sub = induced_subgraph(g, &nodes);
            graphs.push(largest_connected_component(&sub.graph).graph);
        }
    }
    Ok(GraphCorpus { graphs, source: source.to_string(), sizes: sizes.to_vec(), per_size, seed })
}

/// Breadth-first ball around a seeded random start node, cut at `target`
/// nodes. Returns the induced (connected) subgraph.
pub fn snowball_subsample(g: &SignedGraph, target: usize, seed: u64) -> Result<Subgraph> {
    if target == 0 || target > g.n() {
        return Err(Error::invalid(format!("subsample size {target} not in 1..={}", g.n())));
    }
    let lcc = largest_connected_component(g);
    if target > lcc.graph.n() {
        return Err(Error::invalid(format!(
            "subsample size {target} exceeds largest component ({})",
            lcc.graph.n()
        )));
    }
    let h = &lcc.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..h.n());
    let mut visited = vec![false; h.n()];
    let mut picked = Vec::with_capacity(target);
    let mut queue = VecDeque::from([start]);
    visited[start] = true;
    while let Some(u) = queue.pop_front() {
        picked.push(u);
        if picked.len() == target {
            break;
        }
        let mut next: Vec<usize> = h.neighbors(u).iter().map(|&(w, _)| w).filter(|&w| !visited[w]).collect();
        next.shuffle(&mut rng);
        for w in next {
            visited[w] = true;
            queue.push_back(w);
        }
    }
    let sub = induced_subgraph(h, &picked);
    let node_map = sub.node_map.iter().map(|&i| lcc.node_map[i]).collect();
    Ok(Subgraph { graph: sub.graph, node_map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_plus_edge() -> SignedGraph {
        SignedGraph::from_edges(5, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, -1)]).unwrap()
    }

    #[test]
    fn lcc_keeps_triangle() {
        let sub = largest_connected_component(&triangle_plus_edge());
        assert_eq!(sub.graph.n(), 3);
        assert_eq!(sub.node_map, vec![0, 1, 2]);
    }

    #[test]
    fn lcc_tie_prefers_component_with_node_zero() {
        let g = SignedGraph::from_edges(6, [(3, 4, 1), (4, 5, 1), (0, 1, -1), (1, 2, 1)]).unwrap();
        let sub = largest_connected_component(&g);
        assert_eq!(sub.node_map, vec![0, 1, 2]);
    }

    #[test]
    fn connected_graph_is_unchanged() {
        let g = SignedGraph::from_edges(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        assert_eq!(largest_connected_component(&g).graph, g);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let g = SignedGraph::from_edges(11, (0..10).map(|i| (i, i + 1, 1))).unwrap();
        let s = split_edges(&g, 0.1, 3).unwrap();
        assert_eq!(s.test.len(), 1);
        assert_eq!(s.train.len(), 9);
        assert_eq!(s, split_edges(&g, 0.1, 3).unwrap());
        assert!(split_edges(&g, 0.01, 3).is_err());
        assert!(split_edges(&g, 1.0, 3).is_err());
    }

    #[test]
    fn corpus_size_and_full_sample() {
        let g = triangle_plus_edge();
        let c = sample_subgraph_corpus(&g, &[5, 4], 3, 9, "toy").unwrap();
        assert_eq!(c.graphs.len(), 6);
        assert_eq!(c.graphs[0], largest_connected_component(&g).graph);
        assert!(sample_subgraph_corpus(&g, &[6], 1, 0, "toy").is_err());
    }

    #[test]
    fn snowball_is_connected() {
        let g = SignedGraph::from_edges(8, (0..7).map(|i| (i, i + 1, 1))).unwrap();
        let sub = snowball_subsample(&g, 4, 1).unwrap();
        assert_eq!(sub.graph.n(), 4);
        assert_eq!(largest_connected_component(&sub.graph).graph.n(), 4);
    }
}
