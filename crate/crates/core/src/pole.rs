//! Signed random-walk similarities, factorized embeddings and the POLE link
//! sign predictor.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fextra::{self, LrModel, TrainConfig, Transform};
use crate::graph::{EdgeSplit, ObservedGraph, SignedGraph, DEGREE_FLOOR};
use crate::numerics::linalg::{matrix_exp, sym_matrix_exp};
use crate::numerics::tape::{Matrix, Tape, Var};
use crate::numerics::{matrix_exp_on_tape, TAYLOR_ORDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkMode {
    /// `exp(−(I − D⁻¹A)t)` through the Taylor route.
    #[default]
    Unsym,
    /// `exp(−(I − D^{-1/2} A D^{-1/2})t)` through the spectrum.
    Sym,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub t: f64,
    pub mode: WalkMode,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self { t: 1.0, mode: WalkMode::Unsym }
    }
}

impl WalkParams {
    pub fn new(t: f64, mode: WalkMode) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("Markov time must be positive, got {t}")));
        }
        Ok(Self { t, mode })
    }

    pub fn with_mode(self, mode: WalkMode) -> Self {
        Self { mode, ..self }
    }
}

/// Unsigned degrees of `g`, floored. Logs isolated nodes.
pub fn floored_degrees(g: &SignedGraph) -> DVector<f64> {
    let degrees = g.degrees();
    let isolated = degrees.iter().filter(|&&d| d == 0).count();
    if isolated > 0 {
        log::warn!("{isolated} isolated node(s); degree floor {DEGREE_FLOOR:e} applied");
    }
    DVector::from_iterator(g.n(), degrees.into_iter().map(|d| (d as f64).max(DEGREE_FLOOR)))
}

/// Elementwise factor turning `A` into `D⁻¹A` (unsym) or `D^{-1/2}AD^{-1/2}`
/// (sym).
fn normalizer(degrees: &DVector<f64>, mode: WalkMode) -> Matrix {
    let n = degrees.len();
    match mode {
        WalkMode::Unsym => Matrix::from_fn(n, n, |i, _| 1.0 / degrees[i]),
        WalkMode::Sym => {
            let r: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
            Matrix::from_fn(n, n, |i, j| r[i] * r[j])
        }
    }
}

/// `t · (N − I)` where `N` is the normalized adjacency.
pub fn generator(a: &Matrix, degrees: &DVector<f64>, p: &WalkParams) -> Matrix {
    let n = a.nrows();
    (a.component_mul(&normalizer(degrees, p.mode)) - Matrix::identity(n, n)) * p.t
}

/// Transition matrix for an arbitrary (possibly partially signed)
/// adjacency with the given degrees.
pub fn transition_from(a: &Matrix, degrees: &DVector<f64>, p: &WalkParams) -> Result<Matrix> {
    let gen = generator(a, degrees, p);
    match p.mode {
        WalkMode::Unsym => Ok(matrix_exp(&gen)),
        WalkMode::Sym => sym_matrix_exp(&gen),
    }
}

pub fn transition_on_tape(tape: &mut Tape, a: Var, degrees: &DVector<f64>, p: &WalkParams) -> Result<Var> {
    let n = tape.shape(a).0;
    let scale = tape.constant(normalizer(degrees, p.mode) * p.t);
    let scaled = tape.mul(a, scale);
    let shift = tape.constant(Matrix::identity(n, n) * -p.t);
    let gen = tape.add(scaled, shift);
    match p.mode {
        WalkMode::Unsym => Ok(matrix_exp_on_tape(tape, gen, TAYLOR_ORDER)),
        WalkMode::Sym => tape.sym_exp(gen),
    }
}

/// `M(t)` of the signed (`signed = true`) or unsigned adjacency of `g`.
pub fn signed_transition(g: &SignedGraph, p: &WalkParams, signed: bool) -> Result<Matrix> {
    let a = if signed { g.adjacency() } else { g.abs_adjacency() };
    transition_from(&a, &floored_degrees(g), p)
}

/// `W = D / vol − d dᵀ / vol²`.
pub fn weight_matrix(degrees: &DVector<f64>) -> Matrix {
    let vol = degrees.sum();
    Matrix::from_diagonal(&(degrees / vol)) - degrees * degrees.transpose() / (vol * vol)
}

/// `Mᵀ W M`, evaluated without forming `W`.
pub fn autocovariance_from(m: &Matrix, degrees: &DVector<f64>) -> Matrix {
    let vol = degrees.sum();
    let mut dm = m.clone();
    for (i, mut row) in dm.row_iter_mut().enumerate() {
        row *= degrees[i];
    }
    let mtd = m.tr_mul(degrees);
    m.tr_mul(&dm) / vol - &mtd * mtd.transpose() / (vol * vol)
}

pub fn autocovariance_on_tape(tape: &mut Tape, m: Var, degrees: &DVector<f64>) -> Var {
    let n = degrees.len();
    let vol = degrees.sum();
    let rows = tape.constant(Matrix::from_fn(n, n, |i, _| degrees[i] / vol));
    let dm = tape.mul(m, rows);
    let mt = tape.transpose(m);
    let first = tape.matmul(mt, dm);
    let d = tape.constant(Matrix::from_column_slice(n, 1, degrees.as_slice()));
    let mtd = tape.matmul(mt, d);
    let mtd_t = tape.transpose(mtd);
    let outer = tape.matmul(mtd, mtd_t);
    let second = tape.scale(outer, 1.0 / (vol * vol));
    tape.sub(first, second)
}

pub fn autocovariance(g: &SignedGraph, p: &WalkParams, signed: bool) -> Result<Matrix> {
    let m = signed_transition(g, p, signed)?;
    Ok(autocovariance_from(&m, &floored_degrees(g)))
}

/// Transition and autocovariance matrices of one graph view.
#[derive(Debug, Clone)]
pub struct SimilarityMatrices {
    pub r_sign: Matrix,
    pub r_abs: Matrix,
    pub w: Matrix,
    pub m_sign: Matrix,
    pub m_abs: Matrix,
}

impl SimilarityMatrices {
    /// Similarities of an observed graph. Both walks run over the visible
    /// links only, so a hidden link is absent from both views alike.
    pub fn of_observed(obs: &ObservedGraph, p: &WalkParams) -> Result<Self> {
        let m_sign = transition_from(&obs.signed, &obs.degrees, p)?;
        let m_abs = transition_from(&obs.visible_abs(), &obs.degrees, p)?;
        Ok(Self {
            r_sign: autocovariance_from(&m_sign, &obs.degrees),
            r_abs: autocovariance_from(&m_abs, &obs.degrees),
            w: weight_matrix(&obs.degrees),
            m_sign,
            m_abs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub dim: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self { dim: 32, iterations: 50, lr: 0.01, seed: 0 }
    }
}

/// Result of fitting `U Uᵀ ≈ R`.
#[derive(Debug, Clone)]
pub struct EmbeddingFactor {
    pub u: Matrix,
    pub dim: usize,
    pub iterations: usize,
    /// Step size in effect after the last accepted step.
    pub lr: f64,
    pub residual: f64,
    /// Residual before the first step and after every accepted step.
    pub residuals: Vec<f64>,
}

const MAX_HALVINGS: usize = 60;

/// `‖U Uᵀ − R‖²_F` through `‖UᵀU‖² − 2 tr(Uᵀ R U) + ‖R‖²`.
pub fn factor_residual(u: &Matrix, r: &Matrix) -> f64 {
    let utu = u.tr_mul(u);
    let ru = r * u;
    let cross: f64 = u.component_mul(&ru).sum();
    (utu.norm_squared() - 2.0 * cross + r.norm_squared()).max(0.0)
}

pub fn initial_factor(n: usize, cfg: &FactorConfig) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Matrix::from_fn(n, cfg.dim, |_, _| StandardNormal.sample(&mut rng))
}

fn check_divergence(residual: f64, initial: f64) -> Result<()> {
    if !residual.is_finite() || residual > 1e6 * initial.max(1.0) {
        return Err(Error::numeric("factorize", format!("diverged, residual {residual:e}")));
    }
    Ok(())
}

fn factor_step(u: &Matrix, r: &Matrix, lr: f64) -> Matrix {
    let grad = (u * u.tr_mul(u) - r * u) * 4.0;
    u - grad * lr
}

/// Gradient descent on `‖U Uᵀ − R‖²` from a seeded standard normal start.
/// A step that would raise the residual is retried with half the step size.
pub fn factorize(r: &Matrix, cfg: &FactorConfig) -> Result<EmbeddingFactor> {
    let r = (r + r.transpose()) * 0.5;
    let mut u = initial_factor(r.nrows(), cfg);
    let mut residual = factor_residual(&u, &r);
    let initial = residual;
    let mut lr = cfg.lr;
    let mut residuals = vec![residual];
    for _ in 0..cfg.iterations {
        let mut halvings = 0;
        loop {
            let cand = factor_step(&u, &r, lr);
            let res = factor_residual(&cand, &r);
            if res.is_finite() && res <= residual {
                u = cand;
                residual = res;
                break;
            }
            halvings += 1;
            lr *= 0.5;
            if halvings > MAX_HALVINGS {
                check_divergence(res, initial)?;
                return Err(Error::numeric("factorize", "step size underflow"));
            }
        }
        residuals.push(residual);
    }
    check_divergence(residual, initial)?;
    Ok(EmbeddingFactor { u, dim: cfg.dim, iterations: cfg.iterations, lr, residual, residuals })
}

/// The same descent recorded on the tape so that `U` is differentiable with
/// respect to `R`. Rejected trial steps are removed from the tape.
pub fn factorize_on_tape(tape: &mut Tape, r: Var, cfg: &FactorConfig) -> Result<(Var, EmbeddingFactor)> {
    let n = tape.shape(r).0;
    let r_val = tape.value(r).clone();
    let mut u = tape.constant(initial_factor(n, cfg));
    let mut residual = factor_residual(tape.value(u), &r_val);
    let initial = residual;
    let mut lr = cfg.lr;
    let mut residuals = vec![residual];
    for _ in 0..cfg.iterations {
        let mark = tape.len();
        let ut = tape.transpose(u);
        let utu = tape.matmul(ut, u);
        let uutu = tape.matmul(u, utu);
        let ru = tape.matmul(r, u);
        let diff = tape.sub(uutu, ru);
        let base = tape.len();
        let mut halvings = 0;
        loop {
            let step = tape.scale(diff, 4.0 * lr);
            let cand = tape.sub(u, step);
            let res = factor_residual(tape.value(cand), &r_val);
            if res.is_finite() && res <= residual {
                u = cand;
                residual = res;
                break;
            }
            tape.truncate(base);
            halvings += 1;
            lr *= 0.5;
            if halvings > MAX_HALVINGS {
                tape.truncate(mark);
                check_divergence(res, initial)?;
                return Err(Error::numeric("factorize", "step size underflow"));
            }
        }
        residuals.push(residual);
    }
    check_divergence(residual, initial)?;
    let meta = EmbeddingFactor {
        u: tape.value(u).clone(),
        dim: cfg.dim,
        iterations: cfg.iterations,
        lr,
        residual,
        residuals,
    };
    Ok((u, meta))
}

const NORM_FLOOR: f64 = 1e-9;

fn row_norms(u: &Matrix) -> Vec<f64> {
    u.row_iter().map(|r| r.norm().max(NORM_FLOOR)).collect()
}

/// `R_cos = clamp(R / (‖U_i‖‖U_j‖), −1, 1)` and `P = (R_cos + 1) / 2`.
pub fn cosine_normalize(r: &Matrix, u: &Matrix) -> (Matrix, Matrix) {
    let norms = row_norms(u);
    let cos = Matrix::from_fn(r.nrows(), r.ncols(), |i, j| {
        (r[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
    });
    let p = cos.map(|c| (c + 1.0) * 0.5);
    (cos, p)
}

/// `P` at the listed entries, recorded on the tape (k × 1).
pub fn link_probabilities_on_tape(tape: &mut Tape, r: Var, u: Var, links: &[(usize, usize)]) -> Var {
    let sq = tape.mul(u, u);
    let sums = tape.row_sums(sq);
    let norms = tape.sqrt(sums);
    let norms = tape.clamp_min(norms, NORM_FLOOR);
    let left = tape.gather(norms, &links.iter().map(|&(a, _)| (a, 0)).collect::<Vec<_>>());
    let right = tape.gather(norms, &links.iter().map(|&(_, b)| (b, 0)).collect::<Vec<_>>());
    let denom = tape.mul(left, right);
    let num = tape.gather(r, links);
    let ratio = tape.div(num, denom);
    let cos = tape.clamp(ratio, -1.0, 1.0);
    let shifted = tape.add_scalar(cos, 1.0);
    tape.scale(shifted, 0.5)
}

/// Victim training settings shared by the link predictors.
pub fn victim_train_config() -> TrainConfig {
    TrainConfig { lr: 0.1, iterations: 1000, init: fextra::ThetaInit::Zeros }
}

/// POLE link classifier: logistic regression on the z-scored pair
/// `(R_sign[u,v], R_abs[u,v])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoleModel {
    pub lr: LrModel,
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

pub fn link_pairs(sim: &SimilarityMatrices, links: &[(usize, usize)]) -> Matrix {
    Matrix::from_fn(links.len(), 2, |k, c| {
        if c == 0 {
            sim.r_sign[links[k]]
        } else {
            sim.r_abs[links[k]]
        }
    })
}

impl PoleModel {
    pub fn fit(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<Self> {
        let k = x.nrows().max(1) as f64;
        let mut mean = [0.0; 2];
        let mut std = [1.0; 2];
        for c in 0..2 {
            let col = x.column(c);
            mean[c] = col.sum() / k;
            let var = col.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / k;
            std[c] = if var.sqrt() > 1e-300 { var.sqrt() } else { 1.0 };
        }
        let z = Self::scale(x, &mean, &std);
        let lr = fextra::lr_train(&z, y, Transform::Identity, cfg)?;
        Ok(Self { lr, mean, std })
    }

    fn scale(x: &Matrix, mean: &[f64; 2], std: &[f64; 2]) -> Matrix {
        Matrix::from_fn(x.nrows(), 2, |i, c| (x[(i, c)] - mean[c]) / std[c])
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        fextra::lr_predict(&self.lr, &Self::scale(x, &self.mean, &self.std))
    }
}

/// Trains on the visible training links and returns positive-sign
/// probabilities for the test links of `split`.
pub fn pole_predict(g: &SignedGraph, split: &EdgeSplit, p: &WalkParams) -> Result<Vec<f64>> {
    pole_predict_with(g, split, p, &victim_train_config())
}

pub fn pole_predict_with(
    g: &SignedGraph,
    split: &EdgeSplit,
    p: &WalkParams,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let obs = ObservedGraph::new(g, split);
    let sim = SimilarityMatrices::of_observed(&obs, p)?;
    let y: Vec<f64> = split.train.iter().map(|&k| if g.edge(k).sign > 0 { 1.0 } else { 0.0 }).collect();
    let model = PoleModel::fit(&link_pairs(&sim, &obs.train_links), &y, cfg)?;
    Ok(model.predict(&link_pairs(&sim, &obs.test_links)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_triangles() -> SignedGraph {
        SignedGraph::from_edges(
            6,
            [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1), (2, 3, -1)],
        )
        .unwrap()
    }

    #[test]
    fn positive_graph_sign_equals_abs() {
        let g = SignedGraph::from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 2, 1)]).unwrap();
        let p = WalkParams::default();
        assert_eq!(signed_transition(&g, &p, true).unwrap(), signed_transition(&g, &p, false).unwrap());
        assert_eq!(autocovariance(&g, &p, true).unwrap(), autocovariance(&g, &p, false).unwrap());
    }

    #[test]
    fn short_time_is_near_identity() {
        let g = two_triangles();
        let m = signed_transition(&g, &WalkParams::new(0.001, WalkMode::Unsym).unwrap(), true).unwrap();
        assert!((m - Matrix::identity(6, 6)).amax() < 0.01);
    }

    #[test]
    fn two_node_closed_form() {
        let g = SignedGraph::from_edges(2, [(0, 1, 1)]).unwrap();
        let m = signed_transition(&g, &WalkParams::default(), true).unwrap();
        assert!((m[(0, 0)] - (-1f64).exp() * 1f64.cosh()).abs() < 1e-12);
        assert!((m[(0, 1)] - (-1f64).exp() * 1f64.sinh()).abs() < 1e-12);
    }

    #[test]
    fn weight_matrix_annihilates_ones() {
        let d = floored_degrees(&two_triangles());
        let w = weight_matrix(&d);
        assert!(w.row_sum().amax() < 1e-15 && w.column_sum().amax() < 1e-15);
        let m = signed_transition(&two_triangles(), &WalkParams::default(), true).unwrap();
        let direct = m.transpose() * &w * &m;
        assert!((direct - autocovariance_from(&m, &d)).amax() < 1e-14);
    }

    #[test]
    fn sym_mode_autocovariance_is_symmetric() {
        let p = WalkParams::new(1.0, WalkMode::Sym).unwrap();
        let r = autocovariance(&two_triangles(), &p, true).unwrap();
        assert!((&r - r.transpose()).amax() < 1e-10);
    }

    #[test]
    fn polarized_sign_pattern() {
        let r = autocovariance(&two_triangles(), &WalkParams::default(), true).unwrap();
        for (a, b) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            assert!(r[(a, b)] > 0.0, "({a},{b}) = {}", r[(a, b)]);
        }
        let cross = (0..3).flat_map(|a| (3..6).map(move |b| (a, b)));
        let negative = cross.filter(|&(a, b)| r[(a, b)] < 0.0).count();
        assert!(negative > 9 / 2, "{negative}");
    }

    #[test]
    fn factorize_identity_and_zero() {
        let cfg = FactorConfig { dim: 4, iterations: 500, lr: 0.01, seed: 3 };
        let f = factorize(&Matrix::identity(4, 4), &cfg).unwrap();
        assert!(f.residual < 1e-3, "{}", f.residual);
        assert!(f.residuals.windows(2).all(|w| w[1] <= w[0]));

        let f = factorize(&Matrix::zeros(5, 5), &FactorConfig { dim: 3, ..cfg }).unwrap();
        assert!(f.residual <= f.residuals[0]);
        assert!(f.u.norm() < initial_factor(5, &FactorConfig { dim: 3, ..cfg }).norm());
    }

    #[test]
    fn factorize_rank_two() {
        let v = Matrix::from_fn(6, 2, |i, j| ((i + 1) as f64 * (j as f64 + 0.5)).sin());
        let r = &v * v.transpose();
        let cfg = FactorConfig { dim: 2, iterations: 3000, lr: 0.01, seed: 1 };
        let f = factorize(&r, &cfg).unwrap();
        assert!(f.residual < 1e-4, "{}", f.residual);
    }

    #[test]
    fn tape_factorization_matches_plain() {
        let r = autocovariance(&two_triangles(), &WalkParams::default(), true).unwrap() * 50.0;
        let cfg = FactorConfig { dim: 3, iterations: 20, lr: 0.01, seed: 5 };
        let plain = factorize(&r, &cfg).unwrap();
        let mut tape = Tape::new();
        let rv = tape.var(r.clone());
        let (u, meta) = factorize_on_tape(&mut tape, rv, &cfg).unwrap();
        assert!((tape.value(u) - &plain.u).amax() < 1e-12);
        assert_eq!(meta.residuals.len(), plain.residuals.len());
    }

    #[test]
    fn cosine_of_exact_factor() {
        let u = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
        let (cos, p) = cosine_normalize(&(&u * u.transpose()), &u);
        for i in 0..3 {
            assert!((cos[(i, i)] - 1.0).abs() < 1e-12);
        }
        assert!((cos[(0, 1)] - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(cos[(0, 2)], 0.0);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));

        let big = Matrix::from_element(3, 3, 1e3);
        let (cos, p) = cosine_normalize(&big, &u);
        assert!(cos.iter().all(|&c| c == 1.0) && p.iter().all(|&x| x == 1.0));

        let zero_row = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (cos, _) = cosine_normalize(&Matrix::from_element(2, 2, -0.3), &zero_row);
        assert!(cos.iter().all(|c| c.is_finite() && (-1.0..=1.0).contains(c)));
        assert_eq!(cos[(0, 1)], -1.0);
    }

    #[test]
    fn all_positive_training_predicts_positive() {
        let g = SignedGraph::from_edges(5, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (2, 3, 1), (3, 4, 1), (2, 4, 1)])
            .unwrap();
        let split = EdgeSplit::new(&g, vec![0, 1, 2, 3, 5], vec![4]).unwrap();
        let p = pole_predict(&g, &split, &WalkParams::default()).unwrap();
        assert!(p.iter().all(|&x| x > 0.5));
    }

    #[test]
    fn polarized_within_triangle_link_is_positive() {
        let g = two_triangles();
        let k = g.edge_index(0, 1).unwrap();
        let train = (0..g.num_edges()).filter(|&i| i != k).collect();
        let split = EdgeSplit::new(&g, train, vec![k]).unwrap();
        let p = pole_predict(&g, &split, &WalkParams::default()).unwrap();
        assert!(p[0] > 0.5, "{}", p[0]);
    }
}
