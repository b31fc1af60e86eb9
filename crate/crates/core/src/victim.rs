//! The trust predictors as a victim would train them: fit on the visible
//! training links of a graph, score its hidden test links.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fextra::{self, LabelRole, LabelVector, LrModel, TrainConfig, Transform};
use crate::graph::{EdgeSplit, SignedGraph};
use crate::pole::{self, WalkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VictimKind {
    Fextra,
    Pole,
}

impl std::fmt::Display for VictimKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VictimKind::Fextra => "fextra",
            VictimKind::Pole => "pole",
        })
    }
}

fn pairs(g: &SignedGraph, idx: &[usize]) -> Vec<(usize, usize)> {
    idx.iter().map(|&k| g.edge(k).pair()).collect()
}

/// FeXtra fitted on the training links with test signs hidden.
pub fn fextra_fit(g: &SignedGraph, split: &EdgeSplit, cfg: &TrainConfig) -> Result<LrModel> {
    let (train, test) = (pairs(g, &split.train), pairs(g, &split.test));
    let x = fextra::extract_features_masked(g, &test, &train)?;
    let y: Vec<f64> = split.train.iter().map(|&k| if g.edge(k).sign > 0 { 1.0 } else { 0.0 }).collect();
    fextra::lr_train(&x.rows, &y, Transform::Log1p, cfg)
}

pub fn fextra_test_probs(g: &SignedGraph, split: &EdgeSplit, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let model = fextra_fit(g, split, cfg)?;
    let test = pairs(g, &split.test);
    let x = fextra::extract_features_masked(g, &test, &test)?;
    Ok(fextra::lr_predict(&model, &x.rows))
}

/// Positive-sign probabilities on the test links of `split`.
pub fn test_probs(kind: VictimKind, g: &SignedGraph, split: &EdgeSplit, walk: &WalkParams) -> Result<Vec<f64>> {
    let cfg = pole::victim_train_config();
    match kind {
        VictimKind::Fextra => fextra_test_probs(g, split, &cfg),
        VictimKind::Pole => pole::pole_predict_with(g, split, walk, &cfg),
    }
}

/// Test AUC against the ground-truth hidden signs stored in `split`.
pub fn test_auc(kind: VictimKind, g: &SignedGraph, split: &EdgeSplit, walk: &WalkParams) -> Result<f64> {
    let probs = test_probs(kind, g, split, walk)?;
    let labels: Vec<bool> = split.hidden_signs.iter().map(|&s| s > 0).collect();
    fextra::auc(&probs, &labels)
}

/// Victim predictions on the clean graph, thresholded at 0.5. The attacker
/// uses these in place of the unknown test signs.
pub fn self_train_labels(
    kind: VictimKind,
    g_clean: &SignedGraph,
    split: &EdgeSplit,
    walk: &WalkParams,
) -> Result<LabelVector> {
    let probs = test_probs(kind, g_clean, split, walk)?;
    Ok(LabelVector::threshold(&probs, LabelRole::SelfTrained))
}
