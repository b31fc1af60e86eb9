use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgattack::attacks::{AttackConfig, AttackTarget};
use sgattack::detectors::{DetectorSettings, Strategy};
use sgattack::graph::EdgeListFormat;
use sgattack::synthetic::TrustNetworkConfig;

use crate::error::{HarnessError, Result};

/// Where the base graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    File { path: PathBuf, format: EdgeListFormat },
    Synthetic { network: TrustNetworkConfig, seed: u64 },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { network: TrustNetworkConfig::bitcoin_alpha_like(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Flip,
    Rand,
    GreedyTriads,
}

impl AttackKind {
    pub fn name(self, target: AttackTarget) -> String {
        match self {
            AttackKind::Flip => target.name().to_string(),
            AttackKind::Rand => "rand".into(),
            AttackKind::GreedyTriads => "greedy-triads".into(),
        }
    }
}

/// Overrides on top of the per-target attack defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOverrides {
    pub budget: Option<usize>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub inner_l: Option<usize>,
    pub inner_lr: Option<f64>,
    pub t: Option<f64>,
    pub dim: Option<usize>,
    pub checkpoints: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub settings: DetectorSettings,
    /// Corpus subgraph sizes as fractions of the base graph's node count.
    pub fractions: Vec<f64>,
    pub per_size: usize,
    pub strategies: Vec<Strategy>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            settings: DetectorSettings::default(),
            fractions: vec![0.26, 0.40, 0.53, 0.66, 0.79, 0.92],
            per_size: 10,
            strategies: vec![Strategy::Mean, Strategy::Min, Strategy::Max],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub nodes: usize,
    pub repeats: usize,
    pub targets: Vec<AttackTarget>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { nodes: 500, repeats: 3, targets: AttackTarget::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    /// Node count of the snowball subsample; 0 keeps the whole graph.
    pub subsample: usize,
    pub test_fraction: f64,
    pub target: AttackTarget,
    pub attack: AttackKind,
    pub overrides: AttackOverrides,
    pub detector: DetectorConfig,
    pub bench: BenchConfig,
    pub trials: Vec<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DataSource::default(),
            subsample: 300,
            test_fraction: 0.1,
            target: AttackTarget::FextraOls,
            attack: AttackKind::Flip,
            overrides: AttackOverrides::default(),
            detector: DetectorConfig::default(),
            bench: BenchConfig::default(),
            trials: vec![0, 1, 2, 3, 4],
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Attack parameters for one trial.
    pub fn attack_config(&self, seed: u64) -> AttackConfig {
        let o = &self.overrides;
        let base = AttackConfig::for_target(self.target);
        AttackConfig {
            budget: o.budget.or(base.budget),
            lambda: o.lambda.unwrap_or(base.lambda),
            eta: o.eta.unwrap_or(base.eta),
            inner_l: o.inner_l.unwrap_or(base.inner_l),
            inner_lr: o.inner_lr.unwrap_or(base.inner_lr),
            t: o.t.unwrap_or(base.t),
            dim: o.dim.unwrap_or(base.dim),
            seed,
            checkpoints: o.checkpoints.clone().unwrap_or(base.checkpoints),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::File { path, .. } = &self.dataset {
            if !path.is_file() {
                return Err(HarnessError::Config(format!("dataset {} does not exist", path.display())));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(HarnessError::Config(format!("test_fraction {} not in (0, 1)", self.test_fraction)));
        }
        if self.trials.is_empty() {
            return Err(HarnessError::Config("no trial seeds".into()));
        }
        if self.detector.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(HarnessError::Config("corpus fractions must lie in (0, 1]".into()));
        }
        self.attack_config(0).validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_document_fills_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"target": "pole-sym", "overrides": {"lambda": 5}}"#).unwrap();
        let a = c.attack_config(3);
        assert_eq!(a.lambda, 5.0);
        assert_eq!(a.inner_l, 50);
        assert_eq!(a.seed, 3);
    }

    #[test]
    fn unsorted_powers_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.overrides.checkpoints = Some(vec![0.1, 0.05]);
        assert!(matches!(c.validate(), Err(e) if e.exit_code() == 2));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"tirals": [1]}"#).is_err());
    }
}
