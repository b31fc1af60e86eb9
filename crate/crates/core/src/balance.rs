//! Triad balance and random-walk polarization.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SignedGraph;
use crate::numerics::tape::{Matrix, Tape, Var};
use crate::pole::{floored_degrees, transition_from, transition_on_tape, WalkMode, WalkParams};

/// Exhaustive triangle count split by the number of negative edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriadCensus {
    pub balanced: usize,
    pub unbalanced: usize,
    /// Counts of `+++`, `++−`, `+−−`, `−−−`.
    pub by_type: [usize; 4],
}

impl TriadCensus {
    pub fn total(&self) -> usize {
        self.balanced + self.unbalanced
    }

    pub fn ratio(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.balanced as f64 / self.total() as f64)
    }
}

pub fn triad_census(g: &SignedGraph) -> TriadCensus {
    let mut census = TriadCensus::default();
    for e in g.edges() {
        let (nu, nv) = (g.neighbors(e.u), g.neighbors(e.v));
        let (mut i, mut j) = (0, 0);
        while i < nu.len() && j < nv.len() {
            let (w, a) = nu[i];
            let (x, b) = nv[j];
            if w < x {
                i += 1;
            } else if x < w {
                j += 1;
            } else {
                // each triangle once: from its edge with the two smallest ids
                if w > e.v {
                    let negatives = [e.sign, a, b].iter().filter(|&&s| s < 0).count();
                    census.by_type[negatives] += 1;
                    if negatives % 2 == 0 {
                        census.balanced += 1;
                    } else {
                        census.unbalanced += 1;
                    }
                }
                i += 1;
                j += 1;
            }
        }
    }
    census
}

/// `Σ_{u,v} A[u,v] · (A²)[v,u]` for a sparse symmetric sign pattern, i.e.
/// `Tr(A³)` and, with all signs positive, `Tr(|A|³)`.
fn trace_cube(g: &SignedGraph) -> (f64, f64) {
    let mut signed = 0i64;
    let mut unsigned = 0i64;
    for e in g.edges() {
        let (nu, nv) = (g.neighbors(e.u), g.neighbors(e.v));
        let (mut i, mut j) = (0, 0);
        let (mut s, mut c) = (0i64, 0i64);
        while i < nu.len() && j < nv.len() {
            match nu[i].0.cmp(&nv[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += (nu[i].1 * nv[j].1) as i64;
                    c += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        // both orientations of the edge
        signed += 2 * e.sign as i64 * s;
        unsigned += 2 * c;
    }
    (signed as f64, unsigned as f64)
}

/// `T = (Tr(A³) + Tr(|A|³)) / (2 Tr(|A|³))`.
pub fn balance_ratio(g: &SignedGraph) -> Result<f64> {
    let (signed, unsigned) = trace_cube(g);
    if unsigned == 0.0 {
        return Err(Error::UndefinedMetric("graph has no triads".into()));
    }
    Ok((signed + unsigned) / (2.0 * unsigned))
}

/// Balance ratio of a dense signed adjacency against a fixed unsigned mask.
pub fn balance_ratio_dense(a: &Matrix, abs: &Matrix) -> Result<f64> {
    let abs_cube = (abs * abs).component_mul(abs).sum();
    if abs_cube == 0.0 {
        return Err(Error::UndefinedMetric("graph has no triads".into()));
    }
    let signed = (a * a).component_mul(a).sum();
    Ok((signed + abs_cube) / (2.0 * abs_cube))
}

/// Nonzero entries `(u, v)` of a symmetric matrix, both orientations.
pub fn support(abs: &Matrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..abs.ncols() {
        for i in 0..abs.nrows() {
            if abs[(i, j)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// `T(A)` on the tape. `abs` is the (fixed) unsigned pattern of `a`.
pub fn balance_ratio_on_tape(tape: &mut Tape, a: Var, abs: &Matrix) -> Result<Var> {
    let abs_cube = (abs * abs).component_mul(abs).sum();
    if abs_cube == 0.0 {
        return Err(Error::UndefinedMetric("graph has no triads".into()));
    }
    let entries = support(abs);
    let a_uv = tape.gather(a, &entries);
    let a2_uv = tape.pair_dot(a, a, &entries);
    let prod = tape.mul(a_uv, a2_uv);
    let tr = tape.sum(prod);
    let shifted = tape.add_scalar(tr, abs_cube);
    Ok(tape.scale(shifted, 1.0 / (2.0 * abs_cube)))
}

/// Pearson correlation, `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    const TINY: f64 = 1e-300;
    if sxx <= TINY || syy <= TINY {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Row-wise correlation of two transition matrices.
pub fn row_polarization(m_abs: &Matrix, m_sign: &Matrix) -> Vec<Option<f64>> {
    (0..m_abs.nrows())
        .map(|u| {
            let x: Vec<f64> = m_abs.row(u).iter().copied().collect();
            let y: Vec<f64> = m_sign.row(u).iter().copied().collect();
            pearson(&x, &y)
        })
        .collect()
}

fn transitions(g: &SignedGraph, t: f64, mode: WalkMode) -> Result<(Matrix, Matrix)> {
    let p = WalkParams::new(t, mode)?;
    let d = floored_degrees(g);
    Ok((transition_from(&g.abs_adjacency(), &d, &p)?, transition_from(&g.adjacency(), &d, &p)?))
}

/// `Pol(u, t)` for every node (unsym walks); `None` marks undefined nodes.
pub fn node_polarizations(g: &SignedGraph, t: f64) -> Result<Vec<Option<f64>>> {
    let (m_abs, m_sign) = transitions(g, t, WalkMode::Unsym)?;
    Ok(row_polarization(&m_abs, &m_sign))
}

pub fn node_polarization(g: &SignedGraph, t: f64, u: usize) -> Result<f64> {
    if u >= g.n() {
        return Err(Error::invalid(format!("node {u} out of range")));
    }
    node_polarizations(g, t)?[u]
        .ok_or_else(|| Error::UndefinedMetric(format!("zero-variance transition row at node {u}")))
}

fn mean_defined(values: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric("no node has a defined polarization".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn graph_polarization(g: &SignedGraph, t: f64) -> Result<f64> {
    mean_defined(&node_polarizations(g, t)?)
}

pub fn graph_polarization_mode(g: &SignedGraph, t: f64, mode: WalkMode) -> Result<f64> {
    let (m_abs, m_sign) = transitions(g, t, mode)?;
    mean_defined(&row_polarization(&m_abs, &m_sign))
}

/// Mean row correlation between a constant unsigned transition `m_abs` and
/// the transition of the signed variable `a`, on the tape.
pub fn graph_polarization_on_tape(
    tape: &mut Tape,
    a: Var,
    m_abs: &Matrix,
    degrees: &DVector<f64>,
    p: &WalkParams,
) -> Result<Var> {
    let n = m_abs.nrows();
    let m_sign = transition_on_tape(tape, a, degrees, p)?;

    let x_mean = m_abs.column_mean();
    let xc = Matrix::from_fn(n, n, |i, j| m_abs[(i, j)] - x_mean[i]);
    let x_norm: Vec<f64> = xc.row_iter().map(|r| r.norm()).collect();

    let ones_row = tape.constant(Matrix::from_element(1, n, 1.0 / n as f64));
    let sums = tape.row_sums(m_sign);
    let means = tape.matmul(sums, ones_row);
    let yc = tape.sub(m_sign, means);
    let xc_var = tape.constant(xc);
    let cross = tape.mul(xc_var, yc);
    let num = tape.row_sums(cross);
    let sq = tape.mul(yc, yc);
    let ss = tape.row_sums(sq);
    let y_norm = tape.sqrt(ss);

    let y_vals = tape.value(y_norm).clone();
    let defined: Vec<(usize, usize)> = (0..n)
        .filter(|&i| x_norm[i] > 1e-150 && y_vals[(i, 0)] > 1e-150)
        .map(|i| (i, 0))
        .collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric("no node has a defined polarization".into()));
    }
    let num = tape.gather(num, &defined);
    let y_norm = tape.gather(y_norm, &defined);
    let x_norm = tape.constant(Matrix::from_fn(defined.len(), 1, |k, _| x_norm[defined[k].0]));
    let denom = tape.mul(x_norm, y_norm);
    let corr = tape.div(num, denom);
    let total = tape.sum(corr);
    Ok(tape.scale(total, 1.0 / defined.len() as f64))
}

/// Balance summary of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_ratio: Option<f64>,
    pub total_triads: usize,
    pub balanced_triads: usize,
    pub by_type: [usize; 4],
    pub pol_nodes: Vec<Option<f64>>,
    pub pol_graph: Option<f64>,
    /// The same mean computed with symmetric walks.
    pub pol_graph_sym: Option<f64>,
    pub t: f64,
}

impl BalanceReport {
    pub fn compute(g: &SignedGraph, t: f64) -> Result<Self> {
        let census = triad_census(g);
        let pol_nodes = node_polarizations(g, t)?;
        let pol_graph = mean_defined(&pol_nodes).ok();
        let pol_graph_sym = graph_polarization_mode(g, t, WalkMode::Sym).ok();
        if let (Some(a), Some(b)) = (pol_graph, pol_graph_sym) {
            log::debug!("polarization unsym {a:.6} sym {b:.6} (diff {:.2e})", (a - b).abs());
        }
        Ok(Self {
            t_ratio: balance_ratio(g).ok(),
            total_triads: census.total(),
            balanced_triads: census.balanced,
            by_type: census.by_type,
            pol_nodes,
            pol_graph,
            pol_graph_sym,
            t,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(signs: [i8; 3]) -> SignedGraph {
        SignedGraph::from_edges(3, [(0, 1, signs[0]), (1, 2, signs[1]), (0, 2, signs[2])]).unwrap()
    }

    #[test]
    fn triangle_ratios() {
        assert_eq!(balance_ratio(&triangle([1, 1, 1])).unwrap(), 1.0);
        assert_eq!(balance_ratio(&triangle([1, 1, -1])).unwrap(), 0.0);
    }

    #[test]
    fn hand_trace_example() {
        let g = SignedGraph::from_edges(4, [(0, 1, 1), (1, 2, 1), (0, 2, -1), (2, 3, 1)]).unwrap();
        assert_eq!(trace_cube(&g), (-6.0, 6.0));
        assert_eq!(balance_ratio(&g).unwrap(), 0.0);
        let a = g.adjacency();
        assert_eq!((&a * &a * &a).trace(), -6.0);
    }

    #[test]
    fn no_triads_is_undefined() {
        let g = SignedGraph::from_edges(3, [(0, 1, 1), (1, 2, -1)]).unwrap();
        assert!(matches!(balance_ratio(&g), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn census_examples() {
        assert_eq!(triad_census(&triangle([1, 1, 1])), TriadCensus { balanced: 1, unbalanced: 0, by_type: [1, 0, 0, 0] });
        assert_eq!(triad_census(&triangle([-1, -1, -1])), TriadCensus { balanced: 0, unbalanced: 1, by_type: [0, 0, 0, 1] });
        let k4 = SignedGraph::from_edges(4, (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j, 1)))).unwrap();
        assert_eq!(triad_census(&k4).balanced, 4);
    }

    #[test]
    fn correlation_kernel() {
        let x = [0.3, -1.0, 2.5, 0.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&x, &[1.0; 4]).is_none());
    }

    #[test]
    fn positive_graphs_have_unit_polarization() {
        let g = triangle([1, 1, 1]);
        assert!(node_polarizations(&g, 1.0).unwrap().iter().all(|p| (p.unwrap() - 1.0).abs() < 1e-12));
        assert!((graph_polarization(&g, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let single = SignedGraph::from_edges(2, [(0, 1, 1)]).unwrap();
        assert!((graph_polarization(&single, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bridged_triangles_are_polarized() {
        let g = SignedGraph::from_edges(
            6,
            [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1), (2, 3, -1)],
        )
        .unwrap();
        assert!(graph_polarization(&g, 1.0).unwrap() > 0.5);
    }

    #[test]
    fn tape_metrics_match_plain() {
        let g = SignedGraph::from_edges(
            5,
            [(0, 1, 1), (1, 2, -1), (0, 2, 1), (2, 3, 1), (3, 4, -1), (2, 4, 1), (1, 3, -1)],
        )
        .unwrap();
        let abs = g.abs_adjacency();
        let mut tape = Tape::new();
        let a = tape.var(g.adjacency());
        let t = balance_ratio_on_tape(&mut tape, a, &abs).unwrap();
        assert!((tape.scalar(t) - balance_ratio(&g).unwrap()).abs() < 1e-14);

        let d = floored_degrees(&g);
        for mode in [WalkMode::Unsym, WalkMode::Sym] {
            let p = WalkParams::new(1.0, mode).unwrap();
            let m_abs = transition_from(&abs, &d, &p).unwrap();
            let pol = graph_polarization_on_tape(&mut tape, a, &m_abs, &d, &p).unwrap();
            let plain = graph_polarization_mode(&g, 1.0, mode).unwrap();
            assert!((tape.scalar(pol) - plain).abs() < 1e-12);
        }
    }
}
