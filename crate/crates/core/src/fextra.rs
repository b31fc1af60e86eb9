//! Degree and triad features for link sign prediction, logistic regression
//! and its closed-form least-squares surrogate.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SignedGraph;
use crate::numerics::tape::{sigmoid, Matrix, SignedCountPlan, Tape, Var};

pub const NUM_FEATURES: usize = 9;

/// Label clipping used before the logit transform.
pub const LABEL_EPS: f64 = 0.01;
/// Ridge added to a near-singular Gram matrix.
pub const RIDGE: f64 = 1e-6;

/// Feature rows in the order
/// `(d_u⁺, d_u⁻, d_v⁺, d_v⁻, |Γ_uv|, Δ⁺⁺, Δ⁺⁻, Δ⁻⁺, Δ⁻⁻)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Matrix,
    pub links: Vec<(usize, usize)>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// Features of `links` on a fully signed graph.
pub fn extract_features(g: &SignedGraph, links: &[(usize, usize)]) -> Result<FeatureMatrix> {
    extract_features_masked(g, &[], links)
}

/// Features of `links` when the signs of `hidden` edges are unknown: those
/// edges still count towards `|Γ|` but contribute to neither degree nor triad
/// features.
pub fn extract_features_masked(
    g: &SignedGraph,
    hidden: &[(usize, usize)],
    links: &[(usize, usize)],
) -> Result<FeatureMatrix> {
    let hidden: HashSet<(usize, usize)> = hidden.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    let sign = |a: usize, b: usize, s: i8| -> i8 {
        if hidden.contains(&(a.min(b), a.max(b))) {
            0
        } else {
            s
        }
    };
    let n = g.n();
    let mut pos = vec![0.0; n];
    let mut neg = vec![0.0; n];
    for e in g.edges() {
        match sign(e.u, e.v, e.sign) {
            1 => {
                pos[e.u] += 1.0;
                pos[e.v] += 1.0;
            }
            -1 => {
                neg[e.u] += 1.0;
                neg[e.v] += 1.0;
            }
            _ => {}
        }
    }

    let mut rows = Matrix::zeros(links.len(), NUM_FEATURES);
    for (k, &(u, v)) in links.iter().enumerate() {
        if g.edge_index(u, v).is_none() {
            return Err(Error::MissingEdge { u, v });
        }
        let (nu, nv) = (g.neighbors(u), g.neighbors(v));
        let (mut common, mut tri) = (0.0, [0.0f64; 4]);
        let (mut i, mut j) = (0, 0);
        while i < nu.len() && j < nv.len() {
            match nu[i].0.cmp(&nv[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let w = nu[i].0;
                    common += 1.0;
                    let a = sign(u, w, nu[i].1);
                    let b = sign(w, v, nv[j].1);
                    let slot = match (a, b) {
                        (1, 1) => Some(0),
                        (1, -1) => Some(1),
                        (-1, 1) => Some(2),
                        (-1, -1) => Some(3),
                        _ => None,
                    };
                    if let Some(s) = slot {
                        tri[s] += 1.0;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        let row = [pos[u], neg[u], pos[v], neg[v], common, tri[0], tri[1], tri[2], tri[3]];
        for (c, x) in row.into_iter().enumerate() {
            rows[(k, c)] = x;
        }
    }
    Ok(FeatureMatrix { rows, links: links.to_vec() })
}

/// Feature matrix (links × 9) recorded on the tape as a function of the
/// observed signed adjacency `a`. `abs_sq` is `|A|²`, which sign flips never
/// change.
pub fn features_on_tape(tape: &mut Tape, a: Var, abs_sq: &Matrix, links: &[(usize, usize)]) -> Var {
    features_on_tape_multi(tape, a, abs_sq, &[links]).remove(0)
}

/// One feature matrix per link set, sharing the sign split of `a`.
pub fn features_on_tape_multi(
    tape: &mut Tape,
    a: Var,
    abs_sq: &Matrix,
    link_sets: &[&[(usize, usize)]],
) -> Vec<Var> {
    let pos = tape.relu(a);
    let neg = tape.sub(pos, a);
    let pos_deg = tape.row_sums(pos);
    let neg_deg = tape.row_sums(neg);
    let all: Vec<(usize, usize)> = link_sets.iter().flat_map(|l| l.iter().copied()).collect();
    let products = [
        tape.pair_dot(pos, pos, &all),
        tape.pair_dot(pos, neg, &all),
        tape.pair_dot(neg, pos, &all),
        tape.pair_dot(neg, neg, &all),
    ];
    let mut offset = 0;
    link_sets
        .iter()
        .map(|links| {
            let us: Vec<(usize, usize)> = links.iter().map(|&(u, _)| (u, 0)).collect();
            let vs: Vec<(usize, usize)> = links.iter().map(|&(_, v)| (v, 0)).collect();
            let rows: Vec<(usize, usize)> = (offset..offset + links.len()).map(|k| (k, 0)).collect();
            offset += links.len();
            let gamma = DMatrix::from_fn(links.len(), 1, |k, _| abs_sq[links[k]]);
            let mut cols = vec![
                tape.gather(pos_deg, &us),
                tape.gather(neg_deg, &us),
                tape.gather(pos_deg, &vs),
                tape.gather(neg_deg, &vs),
                tape.constant(gamma),
            ];
            cols.extend(products.iter().map(|&p| if link_sets.len() == 1 { p } else { tape.gather(p, &rows) }));
            tape.hcat(&cols)
        })
        .collect()
}

/// The same feature matrices as [`features_on_tape_multi`], recorded as a
/// function of the edge-sign vector `s` through a sparse count plan. The
/// plan's links are the link sets concatenated, with `sizes` giving their
/// lengths.
pub fn features_from_signs(
    tape: &mut Tape,
    s: Var,
    plan: &Arc<SignedCountPlan>,
    abs_sq: &Matrix,
    sizes: &[usize],
) -> Vec<Var> {
    assert_eq!(sizes.iter().sum::<usize>(), plan.links().len(), "link set sizes do not cover the plan");
    let counts = tape.signed_counts(s, plan);
    let mut offset = 0;
    sizes
        .iter()
        .map(|&len| {
            let links = &plan.links()[offset..offset + len];
            let column = |tape: &mut Tape, c: usize| {
                let cells: Vec<(usize, usize)> = (offset..offset + len).map(|k| (k, c)).collect();
                tape.gather(counts, &cells)
            };
            let mut cols: Vec<Var> = (0..4).map(|c| column(tape, c)).collect();
            cols.push(tape.constant(DMatrix::from_fn(len, 1, |k, _| abs_sq[links[k]])));
            cols.extend((4..8).map(|c| column(tape, c)).collect::<Vec<_>>());
            offset += len;
            tape.hcat(&cols)
        })
        .collect()
}

/// Feature map applied before the intercept column is prepended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Identity,
    /// `x ↦ ln(1 + x)`
    Log1p,
}

impl Transform {
    pub fn apply(self, x: &Matrix) -> Matrix {
        match self {
            Transform::Identity => x.clone(),
            Transform::Log1p => x.map(f64::ln_1p),
        }
    }

    pub fn apply_on_tape(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Transform::Identity => x,
            Transform::Log1p => {
                let shifted = tape.add_scalar(x, 1.0);
                tape.ln(shifted)
            }
        }
    }
}

/// `[1, transform(x)]`.
pub fn design(x: &Matrix, transform: Transform) -> Matrix {
    let t = transform.apply(x);
    let mut z = Matrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    z.columns_mut(1, x.ncols()).copy_from(&t);
    z
}

pub fn design_on_tape(tape: &mut Tape, x: Var, transform: Transform) -> Var {
    let t = transform.apply_on_tape(tape, x);
    let ones = tape.constant(Matrix::from_element(tape.shape(x).0, 1, 1.0));
    tape.hcat(&[ones, t])
}

/// Logistic model `p = σ([1, transform(x)]·θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_identity")]
    pub transform: Transform,
}

fn is_identity(t: &Transform) -> bool {
    *t == Transform::Identity
}

impl LrModel {
    pub fn zeros(features: usize, transform: Transform) -> Self {
        Self { theta: vec![0.0; features + 1], transform }
    }

    pub fn theta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThetaInit {
    Zeros,
    /// Entries drawn from U[0, 1] with the given seed.
    Uniform { seed: u64 },
}

impl ThetaInit {
    pub fn draw(self, len: usize) -> DVector<f64> {
        match self {
            ThetaInit::Zeros => DVector::zeros(len),
            ThetaInit::Uniform { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                DVector::from_fn(len, |_, _| rng.random::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub iterations: usize,
    pub init: ThetaInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, iterations: 100, init: ThetaInit::Zeros }
    }
}

/// Mean binary cross-entropy of `p` against soft labels `y`.
pub fn cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    let k = p.len().max(1) as f64;
    p.iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pi = pi.clamp(1e-12, 1.0 - 1e-12);
            -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln())
        })
        .sum::<f64>()
        / k
}

/// Full-batch gradient descent on the mean cross-entropy. Returns the model
/// and the loss recorded before each step.
pub fn lr_train_traced(
    x: &Matrix,
    y: &[f64],
    transform: Transform,
    cfg: &TrainConfig,
) -> Result<(LrModel, Vec<f64>)> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if cfg.iterations == 0 {
        return Err(Error::invalid("lr_train needs at least one iteration"));
    }
    let z = design(x, transform);
    let yv = DVector::from_column_slice(y);
    let k = x.nrows().max(1) as f64;
    let mut theta = cfg.init.draw(z.ncols());
    let mut losses = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let p = (&z * &theta).map(sigmoid);
        let loss = cross_entropy(p.as_slice(), y);
        if !loss.is_finite() {
            return Err(Error::numeric("lr_train", format!("non-finite loss at step {step}")));
        }
        losses.push(loss);
        let grad = z.tr_mul(&(p - &yv)) / k;
        theta -= grad * cfg.lr;
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::numeric("lr_train", "parameters diverged"));
    }
    Ok((LrModel { theta: theta.as_slice().to_vec(), transform }, losses))
}

pub fn lr_train(x: &Matrix, y: &[f64], transform: Transform, cfg: &TrainConfig) -> Result<LrModel> {
    lr_train_traced(x, y, transform, cfg).map(|(m, _)| m)
}

pub fn lr_predict(m: &LrModel, x: &Matrix) -> Vec<f64> {
    let z = design(x, m.transform);
    (z * m.theta_vector()).iter().map(|&s| sigmoid(s)).collect()
}

/// `ln(ỹ / (1 − ỹ))` with `ỹ = clip(y, ε, 1 − ε)`.
pub fn clipped_logit(y: f64) -> f64 {
    let c = y.clamp(LABEL_EPS, 1.0 - LABEL_EPS);
    (c / (1.0 - c)).ln()
}

/// Whether a Gram matrix needs the ridge before inversion.
pub fn needs_ridge(gram: &Matrix) -> bool {
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    !(min > 1e-10 * max.max(1e-300))
}

/// Closed-form least-squares fit of the logit labels on `[1, ln(1 + x)]`.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<LrModel> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let z = design(x, Transform::Log1p);
    let target = DVector::from_iterator(y.len(), y.iter().map(|&v| clipped_logit(v)));
    let mut gram = z.tr_mul(&z);
    if needs_ridge(&gram) {
        gram += Matrix::identity(gram.nrows(), gram.ncols()) * RIDGE;
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("ols_fit", "Gram matrix singular after ridge"))?;
    let theta = chol.solve(&z.tr_mul(&target));
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::numeric("ols_fit", "non-finite coefficients"));
    }
    Ok(LrModel { theta: theta.as_slice().to_vec(), transform: Transform::Log1p })
}

/// Mann–Whitney AUC of `scores` for positives marked `true`; ties count ½.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Which link set a label vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRole {
    Train,
    Hidden,
    SelfTrained,
}

/// Binary link labels, `true` for a positive sign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub values: Vec<bool>,
    pub role: LabelRole,
}

impl LabelVector {
    pub fn new(values: Vec<bool>, role: LabelRole) -> Self {
        Self { values, role }
    }

    pub fn from_signs(signs: &[i8], role: LabelRole) -> Self {
        Self { values: signs.iter().map(|&s| s > 0).collect(), role }
    }

    /// `p ≥ 0.5` counts as positive.
    pub fn threshold(probs: &[f64], role: LabelRole) -> Self {
        Self { values: probs.iter().map(|&p| p >= 0.5).collect(), role }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Labels in `{0, 1}` for a sign vector (`+1 ↦ 1`).
pub fn sign_labels(signs: &[i8]) -> Vec<f64> {
    signs.iter().map(|&s| if s > 0 { 1.0 } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_node_graph() -> SignedGraph {
        SignedGraph::from_edges(4, [(0, 1, 1), (1, 2, 1), (0, 2, -1), (2, 3, 1)]).unwrap()
    }

    #[test]
    fn hand_enumerated_rows() {
        let f = extract_features(&four_node_graph(), &[(0, 1)]).unwrap();
        assert_eq!(f.rows.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 1., 2., 0., 1., 0., 0., 1., 0.]);

        let single = SignedGraph::from_edges(2, [(0, 1, 1)]).unwrap();
        let f = extract_features(&single, &[(0, 1)]).unwrap();
        assert_eq!(f.rows.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 0., 1., 0., 0., 0., 0., 0., 0.]);

        let tri = SignedGraph::from_edges(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]).unwrap();
        let f = extract_features(&tri, &[(0, 1)]).unwrap();
        assert_eq!(f.rows.row(0).iter().copied().collect::<Vec<_>>(), vec![2., 0., 2., 0., 1., 1., 0., 0., 0.]);
    }

    #[test]
    fn missing_link_is_an_error() {
        assert!(extract_features(&four_node_graph(), &[(0, 3)]).is_err());
    }

    #[test]
    fn masked_edges_count_only_in_gamma() {
        let f = extract_features_masked(&four_node_graph(), &[(0, 2)], &[(0, 1)]).unwrap();
        assert_eq!(f.rows.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 0., 2., 0., 1., 0., 0., 0., 0.]);
    }

    #[test]
    fn tape_features_match_sparse_route() {
        let g = four_node_graph();
        let links = [(0, 1), (1, 2), (0, 2), (2, 3)];
        let mut tape = Tape::new();
        let a = tape.var(g.adjacency());
        let abs = g.abs_adjacency();
        let x = features_on_tape(&mut tape, a, &(&abs * &abs), &links);
        assert_eq!(tape.value(x), &extract_features(&g, &links).unwrap().rows);
    }

    #[test]
    fn predict_closed_values() {
        let x = Matrix::from_element(2, 1, 0.0);
        let m = LrModel::zeros(1, Transform::Identity);
        assert_eq!(lr_predict(&m, &x), vec![0.5, 0.5]);
        let m = LrModel { theta: vec![3f64.ln(), 0.0], transform: Transform::Identity };
        assert!((lr_predict(&m, &x)[0] - 0.75).abs() < 1e-12);
        let m = LrModel { theta: vec![-(3f64.ln()), 0.0], transform: Transform::Identity };
        assert!((lr_predict(&m, &x)[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn separable_pair_loss_decreases() {
        let x = Matrix::from_column_slice(2, 1, &[-1.0, 1.0]);
        let cfg = TrainConfig { lr: 0.1, iterations: 200, init: ThetaInit::Zeros };
        let (_, losses) = lr_train_traced(&x, &[0.0, 1.0], Transform::Identity, &cfg).unwrap();
        assert!(losses.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn all_positive_labels_drive_predictions_up() {
        let x = Matrix::from_column_slice(3, 1, &[0.2, 1.5, -0.7]);
        let y = [1.0; 3];
        let mut last = 0.0;
        for iterations in [10, 100, 1000] {
            let cfg = TrainConfig { lr: 0.05, iterations, init: ThetaInit::Zeros };
            let (m, losses) = lr_train_traced(&x, &y, Transform::Identity, &cfg).unwrap();
            assert!(losses.windows(2).all(|w| w[1] <= w[0]));
            let p = lr_predict(&m, &x).into_iter().fold(1.0, f64::min);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn ols_interpolates_two_points() {
        let x = Matrix::from_column_slice(2, 1, &[0.0, 3.0]);
        let y = [0.0, 1.0];
        let m = ols_fit(&x, &y).unwrap();
        let z = design(&x, Transform::Log1p);
        let fit = z * m.theta_vector();
        assert!((fit[0] - clipped_logit(0.0)).abs() < 1e-8);
        assert!((fit[1] - clipped_logit(1.0)).abs() < 1e-8);
    }

    #[test]
    fn ols_constant_labels() {
        let x = Matrix::from_fn(6, 2, |i, j| (i * (j + 2)) as f64);
        let m = ols_fit(&x, &[1.0; 6]).unwrap();
        assert!((m.theta[0] - 99f64.ln()).abs() < 1e-6);
        assert!(m.theta[1..].iter().all(|t| t.abs() < 1e-6));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.2, 0.8, 0.1], &[true, false, false, true]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn model_json_shape() {
        let m = LrModel::zeros(9, Transform::Identity);
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["theta"].as_array().unwrap().len(), 10);
        assert_eq!(LrModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
