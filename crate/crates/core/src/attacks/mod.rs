//! Greedy sign-flipping poisoning attacks and two baselines.

mod baselines;
mod loss;

pub use baselines::{baseline_greedy_triads, baseline_rand};
pub use loss::{
    attack_loss_fextra, attack_loss_pole, log_likelihood, objective_value, ols_on_tape, penalized_loss,
    AttackContext, FextraFit, LOG_CLIP,
};

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSplit, SignedGraph};
use crate::pole::{WalkMode, WalkParams};
use crate::victim::{self, VictimKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackTarget {
    FextraOls,
    FextraMeta,
    PoleSym,
    PoleUnsym,
}

impl AttackTarget {
    pub const ALL: [AttackTarget; 4] =
        [AttackTarget::FextraOls, AttackTarget::FextraMeta, AttackTarget::PoleSym, AttackTarget::PoleUnsym];

    pub fn victim(self) -> VictimKind {
        match self {
            AttackTarget::FextraOls | AttackTarget::FextraMeta => VictimKind::Fextra,
            AttackTarget::PoleSym | AttackTarget::PoleUnsym => VictimKind::Pole,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackTarget::FextraOls => "fextra-ols",
            AttackTarget::FextraMeta => "fextra-meta",
            AttackTarget::PoleSym => "pole-sym",
            AttackTarget::PoleUnsym => "pole-unsym",
        }
    }
}

impl std::fmt::Display for AttackTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack target '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Number of flips; `None` means "up to the largest checkpoint".
    pub budget: Option<usize>,
    pub lambda: f64,
    pub eta: f64,
    pub inner_l: usize,
    pub inner_lr: f64,
    /// Markov time of the random walks.
    pub t: f64,
    /// Embedding dimension of the factorization.
    pub dim: usize,
    pub seed: u64,
    /// Attack powers (fractions of `|E|`) at which the poisoned graph is kept.
    pub checkpoints: Vec<f64>,
}

impl AttackConfig {
    pub fn for_target(target: AttackTarget) -> Self {
        let (inner_l, checkpoints) = match target.victim() {
            VictimKind::Fextra => (100, vec![0.01, 0.05, 0.10, 0.15, 0.20]),
            VictimKind::Pole => (50, vec![0.01, 0.03, 0.05, 0.07, 0.10]),
        };
        Self {
            budget: None,
            lambda: 0.0,
            eta: 0.0,
            inner_l,
            inner_lr: 0.01,
            t: 1.0,
            dim: 32,
            seed: 0,
            checkpoints,
        }
    }

    pub fn walk(&self, mode: WalkMode) -> Result<WalkParams> {
        WalkParams::new(self.t, mode)
    }

    /// Flip counts `round(p·|E|)` of the checkpoints.
    pub fn checkpoint_counts(&self, num_edges: usize) -> Vec<(f64, usize)> {
        self.checkpoints.iter().map(|&p| (p, (p * num_edges as f64).round() as usize)).collect()
    }

    pub fn resolved_budget(&self, num_edges: usize) -> usize {
        self.budget.unwrap_or_else(|| {
            self.checkpoint_counts(num_edges).iter().map(|&(_, c)| c).max().unwrap_or(0)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.eta < 0.0 {
            return Err(Error::Config("penalty weights must be non-negative".into()));
        }
        if !(self.t > 0.0) {
            return Err(Error::Config(format!("Markov time must be positive, got {}", self.t)));
        }
        if self.checkpoints.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("checkpoint powers must lie in [0, 1]".into()));
        }
        if self.checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("checkpoint powers must be sorted ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub u: usize,
    pub v: usize,
    pub step: usize,
    /// First-order predicted objective increase of this flip.
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub power: f64,
    pub flips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub attack: String,
    pub budget: usize,
    pub flips: Vec<FlipRecord>,
    /// Objective value before each flip.
    pub loss_curve: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    /// Best candidates per step, highest score first.
    pub ordering: Vec<Vec<(usize, usize)>>,
}

const RANKING_KEPT: usize = 10;

impl AttackTrace {
    fn empty(attack: &str, budget: usize) -> Self {
        Self {
            attack: attack.to_string(),
            budget,
            flips: Vec::with_capacity(budget),
            loss_curve: Vec::with_capacity(budget),
            checkpoints: Vec::new(),
            ordering: Vec::with_capacity(budget),
        }
    }

    /// Links already flipped.
    pub fn pool(&self) -> HashSet<(usize, usize)> {
        self.flips.iter().map(|f| (f.u, f.v)).collect()
    }

    pub fn flipped_pairs(&self, count: usize) -> Vec<(usize, usize)> {
        self.flips[..count.min(self.flips.len())].iter().map(|f| (f.u, f.v)).collect()
    }

    /// `g0` after the first `count` flips.
    pub fn poisoned(&self, g0: &SignedGraph, count: usize) -> Result<SignedGraph> {
        g0.flip_signs(&self.flipped_pairs(count))
    }

    pub fn final_graph(&self, g0: &SignedGraph) -> Result<SignedGraph> {
        self.poisoned(g0, self.flips.len())
    }

    /// Poisoned graph at every checkpoint.
    pub fn snapshots(&self, g0: &SignedGraph) -> Result<Vec<(f64, SignedGraph)>> {
        self.checkpoints.iter().map(|c| Ok((c.power, self.poisoned(g0, c.flips)?))).collect()
    }

    /// Records checkpoints `round(p·num_edges)` that the trace reaches.
    pub fn set_checkpoints(&mut self, powers: &[f64], num_edges: usize) {
        self.checkpoints = powers
            .iter()
            .map(|&p| Checkpoint { power: p, flips: (p * num_edges as f64).round() as usize })
            .filter(|c| c.flips <= self.flips.len())
            .collect();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_budget(budget: usize, split: &EdgeSplit) -> Result<()> {
    if budget > split.train.len() {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds the {} training links",
            split.train.len()
        )));
    }
    Ok(())
}

/// Greedy flip attack with labels self-trained on the clean graph.
pub fn flip_attack(g0: &SignedGraph, split: &EdgeSplit, target: AttackTarget, cfg: &AttackConfig) -> Result<AttackTrace> {
    let walk = cfg.walk(WalkMode::Unsym)?;
    let labels = victim::self_train_labels(target.victim(), g0, split, &walk)?;
    flip_attack_with_labels(g0, split, target, cfg, &labels.values)
}

/// Greedy flip attack against fixed test labels.
pub fn flip_attack_with_labels(
    g0: &SignedGraph,
    split: &EdgeSplit,
    target: AttackTarget,
    cfg: &AttackConfig,
    labels: &[bool],
) -> Result<AttackTrace> {
    cfg.validate()?;
    let budget = cfg.resolved_budget(g0.num_edges());
    check_budget(budget, split)?;
    let mut ctx = AttackContext::new(g0, split, labels)?;
    let mut signs = ctx.clean_signs.clone();
    let mut flipped = vec![false; signs.len()];
    let mut trace = AttackTrace::empty(target.name(), budget);
    let mut warned = false;

    for step in 0..budget {
        let (value, grad) = ctx.objective(target, cfg, &signs)?;
        trace.loss_curve.push(value);
        let mut ranked: Vec<(f64, usize)> = (0..signs.len())
            .filter(|&k| !flipped[k])
            .map(|k| (-2.0 * signs[k] * grad[k], k))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| ctx.train[a.1].cmp(&ctx.train[b.1])));
        let &(gain, k) = ranked.first().expect("budget bounded by training links");
        if gain <= 0.0 && !warned {
            log::info!("step {step}: no flip with positive predicted gain; taking the least harmful");
            warned = true;
        }
        trace.ordering.push(ranked.iter().take(RANKING_KEPT).map(|&(_, i)| ctx.train[i]).collect());
        let (u, v) = ctx.train[k];
        trace.flips.push(FlipRecord { u, v, step, gain });
        signs[k] = -signs[k];
        flipped[k] = true;
    }
    trace.set_checkpoints(&cfg.checkpoints, g0.num_edges());
    Ok(trace)
}
