//! Graph-level poisoning detectors: balance-metric and spectral views, a
//! one-class SVM per view, and score ensembles.

use serde::{Deserialize, Serialize};

use crate::balance;
use crate::error::{Error, Result};
use crate::fextra::auc;
use crate::graph::{GraphCorpus, SignedGraph};
use crate::numerics::linalg::truncated_svd;

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_NU: f64 = 0.1;
pub const TSVD_DIM: usize = 32;
const KKT_TOL: f64 = 1e-6;

/// `(T(g), Pol(g, t))`.
pub fn metric_features(g: &SignedGraph, t: f64) -> Result<Vec<f64>> {
    Ok(vec![balance::balance_ratio(g)?, balance::graph_polarization(g, t)?])
}

/// Column means of the top-`d` left singular vectors of the signed
/// adjacency. When `d > n` the trailing entries are zero.
pub fn tsvd_features(g: &SignedGraph, d: usize) -> Result<Vec<f64>> {
    let k = d.min(g.n());
    let svd = truncated_svd(&g.adjacency(), k)?;
    let mut out = vec![0.0; d];
    for (c, slot) in out.iter_mut().take(k).enumerate() {
        *slot = svd.u.column(c).mean();
    }
    Ok(out)
}

/// Per-dimension z-scoring fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let m = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
        let std = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / m;
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// One-class SVM with an RBF kernel in the ν-parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    /// Normalized feature rows with a nonzero coefficient.
    pub support: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    pub normalizer: Normalizer,
    pub iterations: usize,
}

impl OcsvmModel {
    /// `Σ αᵢ exp(−γ‖xᵢ − x‖²) − ρ` for a raw (un-normalized) feature row.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.normalizer.apply(x);
        self.decision_normalized(&z)
    }

    fn decision_normalized(&self, z: &[f64]) -> f64 {
        self.support.iter().zip(&self.alphas).map(|(s, a)| a * rbf(self.gamma, s, z)).sum::<f64>() - self.rho
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fits the one-class dual
/// `min ½ αᵀKα  s.t. 0 ≤ αᵢ ≤ 1/(νm), Σαᵢ = 1`
/// by sequential pairwise updates with second-order working-set selection.
pub fn ocsvm_fit(rows: &[Vec<f64>], nu: f64, gamma: f64) -> Result<OcsvmModel> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::invalid(format!("one-class SVM needs at least 2 rows, got {m}")));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1], got {nu}")));
    }
    let normalizer = Normalizer::fit(rows);
    let x: Vec<Vec<f64>> = rows.iter().map(|r| normalizer.apply(r)).collect();
    let k: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| rbf(gamma, &x[i], &x[j])).collect()).collect();
    let c = 1.0 / (nu * m as f64);

    let mut alpha = vec![0.0; m];
    let mut remaining: f64 = 1.0;
    for a in alpha.iter_mut() {
        let take = remaining.min(c);
        *a = take;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    let mut grad: Vec<f64> = (0..m).map(|i| (0..m).map(|j| k[i][j] * alpha[j]).sum()).collect();

    let at_upper = |a: f64| a >= c - 1e-15;
    let at_lower = |a: f64| a <= 1e-15;
    let max_iter = 100_000.max(100 * m * m);
    let mut iterations = 0;
    loop {
        // i: most violating index that can grow; j: best partner that can shrink
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..m {
            if !at_upper(alpha[t]) && -grad[t] > gmax {
                gmax = -grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..m {
            if at_lower(alpha[t]) {
                continue;
            }
            gmin = gmin.min(-grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + grad[t];
            if b > 0.0 {
                let a = (k[i][i] + k[t][t] - 2.0 * k[i][t]).max(1e-12);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < KKT_TOL || j == usize::MAX {
            break;
        }
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::numeric("ocsvm_fit", format!("no convergence, KKT gap {:e}", gmax - gmin)));
        }
        let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(1e-12);
        let mut delta = (grad[j] - grad[i]) / quad;
        delta = delta.min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        for t in 0..m {
            grad[t] += delta * (k[t][i] - k[t][j]);
        }
    }

    let (mut lb, mut ub, mut sum_free, mut n_free) = (f64::NEG_INFINITY, f64::INFINITY, 0.0, 0usize);
    for t in 0..m {
        if at_upper(alpha[t]) {
            lb = lb.max(grad[t]);
        } else if at_lower(alpha[t]) {
            ub = ub.min(grad[t]);
        } else {
            sum_free += grad[t];
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (lb + ub) / 2.0 };

    let keep: Vec<usize> = (0..m).filter(|&t| alpha[t] > 0.0).collect();
    Ok(OcsvmModel {
        support: keep.iter().map(|&t| x[t].clone()).collect(),
        alphas: keep.iter().map(|&t| alpha[t]).collect(),
        rho,
        gamma,
        nu,
        normalizer,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Metric,
    Tsvd,
}

impl std::fmt::Display for ViewKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViewKind::Metric => "metric",
            ViewKind::Tsvd => "tsvd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub t: f64,
    pub dim: usize,
    pub nu: f64,
    pub gamma: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self { t: 1.0, dim: TSVD_DIM, nu: DEFAULT_NU, gamma: DEFAULT_GAMMA }
    }
}

/// A featurizer with a one-class model fitted on clean graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorView {
    pub kind: ViewKind,
    pub settings: DetectorSettings,
    pub model: OcsvmModel,
    /// Corpus graphs skipped because a feature was undefined.
    pub rejected: usize,
}

pub fn view_features(kind: ViewKind, g: &SignedGraph, s: &DetectorSettings) -> Result<Vec<f64>> {
    match kind {
        ViewKind::Metric => metric_features(g, s.t),
        ViewKind::Tsvd => tsvd_features(g, s.dim),
    }
}

impl DetectorView {
    pub fn fit(kind: ViewKind, corpus: &GraphCorpus, settings: DetectorSettings) -> Result<Self> {
        let mut rows = Vec::with_capacity(corpus.graphs.len());
        let mut rejected = 0;
        for (i, g) in corpus.graphs.iter().enumerate() {
            match view_features(kind, g, &settings) {
                Ok(f) => rows.push(f),
                Err(Error::UndefinedMetric(msg)) => {
                    log::info!("{kind} view: corpus graph {i} rejected ({msg})");
                    rejected += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let model = ocsvm_fit(&rows, settings.nu, settings.gamma)?;
        Ok(Self { kind, settings, model, rejected })
    }

    pub fn features(&self, g: &SignedGraph) -> Result<Vec<f64>> {
        view_features(self.kind, g, &self.settings)
    }

    /// Decision score; higher means more normal.
    pub fn score(&self, g: &SignedGraph) -> Result<f64> {
        Ok(self.model.decision(&self.features(g)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mean,
    Min,
    Max,
}

impl Strategy {
    pub fn combine(self, xs: &[f64]) -> f64 {
        match self {
            Strategy::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
            Strategy::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
            Strategy::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Rescales to `[0, 1]`; a constant vector maps to zeros.
pub fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

/// AUC of decision scores with the anomalies as the positive class.
pub fn anomaly_auc(scores: &[f64], anomalous: &[bool]) -> Result<f64> {
    let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
    auc(&negated, anomalous)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub graph_id: usize,
    pub view_scores: Vec<f64>,
    pub combined: f64,
    /// `+1` normal, `−1` anomalous.
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub views: Vec<ViewKind>,
    pub strategy: Strategy,
    pub rows: Vec<ReportRow>,
    pub view_auc: Vec<f64>,
    pub auc: f64,
}

/// Scores the clean corpus and the poisoned graphs with every view,
/// min-max normalizes each view over the evaluation set, combines them and
/// reports the AUC of flagging the poisoned graphs.
pub fn detector_eval(
    clean: &GraphCorpus,
    poisoned: &[SignedGraph],
    views: &[DetectorView],
    strategy: Strategy,
) -> Result<DetectionReport> {
    if poisoned.is_empty() || clean.graphs.is_empty() {
        return Err(Error::UndefinedMetric("evaluation set needs clean and poisoned graphs".into()));
    }
    if views.is_empty() {
        return Err(Error::invalid("no detector views"));
    }
    let graphs: Vec<(&SignedGraph, bool)> =
        clean.graphs.iter().map(|g| (g, false)).chain(poisoned.iter().map(|g| (g, true))).collect();

    let mut kept = Vec::new();
    let mut per_view: Vec<Vec<f64>> = vec![Vec::new(); views.len()];
    'graphs: for (id, &(g, bad)) in graphs.iter().enumerate() {
        let mut scores = Vec::with_capacity(views.len());
        for v in views {
            match v.score(g) {
                Ok(s) => scores.push(s),
                Err(Error::UndefinedMetric(msg)) => {
                    log::info!("graph {id} skipped ({msg})");
                    continue 'graphs;
                }
                Err(e) => return Err(e),
            }
        }
        for (col, s) in per_view.iter_mut().zip(scores) {
            col.push(s);
        }
        kept.push((id, bad));
    }
    let labels: Vec<bool> = kept.iter().map(|&(_, b)| b).collect();
    let normalized: Vec<Vec<f64>> = per_view.iter().map(|c| min_max(c)).collect();
    let view_auc = per_view.iter().map(|c| anomaly_auc(c, &labels)).collect::<Result<Vec<_>>>()?;

    let rows: Vec<ReportRow> = kept
        .iter()
        .enumerate()
        .map(|(r, &(id, bad))| {
            let view_scores: Vec<f64> = normalized.iter().map(|c| c[r]).collect();
            ReportRow {
                graph_id: id,
                combined: strategy.combine(&view_scores),
                view_scores,
                label: if bad { -1 } else { 1 },
            }
        })
        .collect();
    let combined: Vec<f64> = rows.iter().map(|r| r.combined).collect();
    let auc = anomaly_auc(&combined, &labels)?;
    Ok(DetectionReport { views: views.iter().map(|v| v.kind).collect(), strategy, rows, view_auc, auc })
}
