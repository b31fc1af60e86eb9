//! Seeded experiment pipelines behind the CLI subcommands.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgattack::attacks::{
    baseline_greedy_triads, baseline_rand, flip_attack, AttackContext, AttackTarget, AttackTrace,
};
use sgattack::balance::BalanceReport;
use sgattack::detectors::{detector_eval, DetectionReport, DetectorView, Strategy, ViewKind};
use sgattack::graph::{
    self, largest_connected_component, load_edge_list, sample_subgraph_corpus, snowball_subsample, split_edges,
    EdgeListFormat, EdgeSplit, GraphCorpus, SignedGraph,
};
use sgattack::pole::WalkMode;
use sgattack::synthetic::trust_network;
use sgattack::victim;

use crate::config::{AttackKind, DataSource, ExperimentConfig};
use crate::error::{HarnessError, Result};

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
}

/// Largest connected component of the configured dataset.
pub fn load_base(cfg: &ExperimentConfig) -> Result<SignedGraph> {
    let g = match &cfg.dataset {
        DataSource::File { path, format } => load_edge_list(path, *format)?.graph,
        DataSource::Synthetic { network, seed } => trust_network(network, *seed)?,
    };
    Ok(largest_connected_component(&g).graph)
}

/// The graph one trial attacks: a snowball subsample of `base`, or `base`
/// itself when `nodes` is 0.
pub fn trial_graph(base: &SignedGraph, nodes: usize, seed: u64) -> Result<SignedGraph> {
    if nodes == 0 || nodes >= base.n() {
        return Ok(base.clone());
    }
    Ok(snowball_subsample(base, nodes, seed)?.graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub seed: u64,
    pub power: f64,
    pub attack: String,
    pub model: String,
    pub auc_clean: f64,
    pub auc_poisoned: f64,
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub graph: SignedGraph,
    pub split: EdgeSplit,
    pub trace: AttackTrace,
    pub rows: Vec<AucRow>,
}

/// Runs the configured attack against one graph and split and returns the
/// trace with its checkpoints set.
pub fn run_attack(cfg: &ExperimentConfig, g: &SignedGraph, split: &EdgeSplit, seed: u64) -> Result<AttackTrace> {
    let acfg = cfg.attack_config(seed);
    let budget = acfg.resolved_budget(g.num_edges());
    let mut trace = match cfg.attack {
        AttackKind::Flip => return Ok(flip_attack(g, split, cfg.target, &acfg)?),
        AttackKind::Rand => baseline_rand(g, split, budget, seed)?,
        AttackKind::GreedyTriads => baseline_greedy_triads(g, split, budget)?,
    };
    trace.set_checkpoints(&acfg.checkpoints, g.num_edges());
    Ok(trace)
}

/// Split, attack, and retrain the victim at every checkpoint.
pub fn attack_trial(cfg: &ExperimentConfig, base: &SignedGraph, seed: u64) -> Result<Trial> {
    let g = trial_graph(base, cfg.subsample, seed)?;
    let split = split_edges(&g, cfg.test_fraction, seed)?;
    let kind = cfg.target.victim();
    let walk = cfg.attack_config(seed).walk(WalkMode::Unsym)?;
    let auc_clean = victim::test_auc(kind, &g, &split, &walk)?;
    let trace = run_attack(cfg, &g, &split, seed)?;
    let attack = cfg.attack.name(cfg.target);
    let mut rows =
        vec![AucRow { seed, power: 0.0, attack: attack.clone(), model: kind.to_string(), auc_clean, auc_poisoned: auc_clean }];
    for (power, poisoned) in trace.snapshots(&g)? {
        rows.push(AucRow {
            seed,
            power,
            attack: attack.clone(),
            model: kind.to_string(),
            auc_clean,
            auc_poisoned: victim::test_auc(kind, &poisoned, &split, &walk)?,
        });
    }
    Ok(Trial { seed, graph: g, split, trace, rows })
}

fn power_tag(p: f64) -> String {
    format!("{:03}", (p * 1000.0).round() as u64)
}

/// All trials in parallel. Each finished trial's trace and checkpoint graphs
/// are written immediately; the AUC table is written from every trial that
/// succeeded, and the first failure is returned afterwards.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<Vec<AucRow>> {
    cfg.validate()?;
    let base = load_base(cfg)?;
    let attack = cfg.attack.name(cfg.target);
    let dir = cfg.out.join("attack");
    let results: Vec<Result<Trial>> = cfg
        .trials
        .par_iter()
        .map(|&seed| {
            let trial = attack_trial(cfg, &base, seed)?;
            let stem = format!("{attack}_seed{seed}");
            write_atomic(&dir.join(format!("{stem}_trace.json")), trial.trace.to_json()?.as_bytes())?;
            for (power, g) in trial.trace.snapshots(&trial.graph)? {
                let path = dir.join(format!("{stem}_p{}.json", power_tag(power)));
                write_atomic(&path, graph::to_json(&g)?.as_bytes())?;
            }
            write_atomic(&dir.join(format!("{stem}_clean.json")), graph::to_json(&trial.graph)?.as_bytes())?;
            Ok(trial)
        })
        .collect();
    let mut rows = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(t) => rows.extend(t.rows),
            Err(e) => {
                log::error!("trial failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_atomic(&cfg.out.join(format!("attack_auc_{attack}.csv")), &csv_bytes(&rows)?)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub clean_graphs: usize,
    pub poisoned_graphs: usize,
    pub metric_auc: f64,
    pub tsvd_auc: f64,
    pub ensemble: Vec<(Strategy, f64)>,
}

impl DetectSummary {
    pub fn ensemble_auc(&self, s: Strategy) -> Option<f64> {
        self.ensemble.iter().find(|(k, _)| *k == s).map(|&(_, a)| a)
    }
}

/// Clean corpus of subgraphs of `base` at the configured size fractions.
pub fn clean_corpus(cfg: &ExperimentConfig, base: &SignedGraph, seed: u64) -> Result<GraphCorpus> {
    let sizes: Vec<usize> =
        cfg.detector.fractions.iter().map(|f| ((f * base.n() as f64).round() as usize).max(3)).collect();
    Ok(sample_subgraph_corpus(base, &sizes, cfg.detector.per_size, seed, "subsample")?)
}

/// Poisoned snapshots of `base`, one attack per trial seed, every checkpoint.
pub fn poisoned_graphs(cfg: &ExperimentConfig, base: &SignedGraph) -> Result<Vec<SignedGraph>> {
    let per_seed: Vec<Result<Vec<SignedGraph>>> = cfg
        .trials
        .par_iter()
        .map(|&seed| {
            let split = split_edges(base, cfg.test_fraction, seed)?;
            let trace = run_attack(cfg, base, &split, seed)?;
            Ok(trace.snapshots(base)?.into_iter().map(|(_, g)| g).collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

pub struct DetectionRun {
    pub summary: DetectSummary,
    pub reports: Vec<DetectionReport>,
    pub views: Vec<DetectorView>,
}

/// Fits both views on a clean corpus and evaluates them, alone and in
/// every configured ensemble, against `poisoned`.
pub fn evaluate_detectors(
    cfg: &ExperimentConfig,
    corpus: &GraphCorpus,
    poisoned: &[SignedGraph],
) -> Result<DetectionRun> {
    let s = cfg.detector.settings;
    let metric = DetectorView::fit(ViewKind::Metric, corpus, s)?;
    let tsvd = DetectorView::fit(ViewKind::Tsvd, corpus, s)?;
    let metric_auc = detector_eval(corpus, poisoned, std::slice::from_ref(&metric), Strategy::Mean)?.auc;
    let tsvd_auc = detector_eval(corpus, poisoned, std::slice::from_ref(&tsvd), Strategy::Mean)?.auc;
    let views = vec![metric, tsvd];
    let reports = cfg
        .detector
        .strategies
        .iter()
        .map(|&st| detector_eval(corpus, poisoned, &views, st))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let summary = DetectSummary {
        clean_graphs: corpus.graphs.len(),
        poisoned_graphs: poisoned.len(),
        metric_auc,
        tsvd_auc,
        ensemble: reports.iter().map(|r| (r.strategy, r.auc)).collect(),
    };
    Ok(DetectionRun { summary, reports, views })
}

#[derive(Debug, Serialize)]
struct ReportCsvRow {
    graph_id: usize,
    metric: f64,
    tsvd: f64,
    combined: f64,
    label: i8,
}

/// Builds the corpus from a subsample of the base graph, attacks that same
/// subsample once per trial seed, and writes per-graph scores, models and
/// the AUC summary.
pub fn cmd_detect(cfg: &ExperimentConfig) -> Result<DetectSummary> {
    cfg.validate()?;
    let full = load_base(cfg)?;
    let seed = cfg.trials[0];
    let base = trial_graph(&full, cfg.subsample, seed)?;
    let corpus = clean_corpus(cfg, &base, seed)?;
    let poisoned = poisoned_graphs(cfg, &base)?;
    let run = evaluate_detectors(cfg, &corpus, &poisoned)?;
    let dir = cfg.out.join("detect");
    for r in &run.reports {
        let rows: Vec<ReportCsvRow> = r
            .rows
            .iter()
            .map(|x| ReportCsvRow {
                graph_id: x.graph_id,
                metric: x.view_scores[0],
                tsvd: x.view_scores[1],
                combined: x.combined,
                label: x.label,
            })
            .collect();
        let name = serde_json::to_value(r.strategy)?.as_str().unwrap_or("ensemble").to_string();
        write_atomic(&dir.join(format!("report_{name}.csv")), &csv_bytes(&rows)?)?;
    }
    for v in &run.views {
        write_atomic(&dir.join(format!("model_{}.json", v.kind)), v.model.to_json()?.as_bytes())?;
    }
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(&run.summary)?.as_bytes())?;
    Ok(run.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub attack: String,
    pub n: usize,
    pub seconds_per_flip: f64,
    /// Per-repeat timings.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl BenchRow {
    /// (max − min) / median over the repeats.
    pub fn spread(&self) -> f64 {
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / self.seconds_per_flip
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Median wall time of one attack step (objective plus gradient) per target
/// on the same subsample and split.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let base = load_base(cfg)?;
    let seed = cfg.trials[0];
    let g = trial_graph(&base, cfg.bench.nodes, seed)?;
    let split = split_edges(&g, cfg.test_fraction, seed)?;
    let labels = vec![true; split.test.len()];
    let mut ctx = AttackContext::new(&g, &split, &labels)?;
    let signs = ctx.clean_signs.clone();
    let mut rows = Vec::new();
    for &target in &cfg.bench.targets {
        let acfg = ExperimentConfig { target, ..cfg.clone() }.attack_config(seed);
        ctx.objective(target, &acfg, &signs)?;
        let mut samples: Vec<f64> = (0..cfg.bench.repeats.max(1))
            .map(|_| {
                let start = Instant::now();
                ctx.objective(target, &acfg, &signs).map(|_| start.elapsed().as_secs_f64())
            })
            .collect::<std::result::Result<_, _>>()?;
        let per_flip = median(&mut samples.clone());
        samples.sort_by(f64::total_cmp);
        log::info!("{target}: {per_flip:.4} s per flip on {} nodes", g.n());
        rows.push(BenchRow { attack: target.name().into(), n: g.n(), seconds_per_flip: per_flip, samples });
    }
    write_atomic(&cfg.out.join("bench.csv"), &csv_bytes(&rows)?)?;
    Ok(rows)
}

/// Ratio of seconds per flip between two benchmarked targets.
pub fn speed_ratio(rows: &[BenchRow], slow: AttackTarget, fast: AttackTarget) -> Option<f64> {
    let get = |t: AttackTarget| rows.iter().find(|r| r.attack == t.name()).map(|r| r.seconds_per_flip);
    Some(get(slow)? / get(fast)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Nodes appearing in the file.
    pub nodes: usize,
    /// Directed rows kept after duplicate resolution.
    pub directed_edges: usize,
    pub directed_positive_ratio: f64,
    /// Undirected edges after merging reciprocal rows.
    pub edges: usize,
    pub positive_ratio: f64,
    pub lcc_nodes: usize,
    pub lcc_edges: usize,
    pub rows_read: usize,
    pub zero_ratings: usize,
    pub self_loops: usize,
    pub cancelled_pairs: usize,
}

/// Loads an edge list, reports its statistics and dumps the largest
/// component to `out/graph.json`.
pub fn cmd_ingest(path: &Path, format: EdgeListFormat, out: &Path) -> Result<IngestReport> {
    let loaded = load_edge_list(path, format)?;
    let g = &loaded.graph;
    let lcc = largest_connected_component(g).graph;
    let pos = loaded.directed_links.iter().filter(|l| l.2 > 0).count();
    let report = IngestReport {
        nodes: g.n(),
        directed_edges: loaded.directed_links.len(),
        directed_positive_ratio: pos as f64 / loaded.directed_links.len().max(1) as f64,
        edges: g.num_edges(),
        positive_ratio: g.positive_ratio(),
        lcc_nodes: lcc.n(),
        lcc_edges: lcc.num_edges(),
        rows_read: loaded.rows_read,
        zero_ratings: loaded.zero_ratings,
        self_loops: loaded.self_loops,
        cancelled_pairs: loaded.cancelled_pairs,
    };
    write_atomic(&out.join("graph.json"), graph::to_json(&lcc)?.as_bytes())?;
    write_atomic(&out.join("ingest.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

/// Reads a graph dump (`.json`) or a plain `u,v,s` edge list.
pub fn read_graph(path: &Path) -> Result<SignedGraph> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(graph::read_json(path)?)
    } else {
        Ok(load_edge_list(path, EdgeListFormat::Plain)?.graph)
    }
}

pub fn cmd_metrics(path: &Path, t: f64) -> Result<BalanceReport> {
    Ok(BalanceReport::compute(&read_graph(path)?, t)?)
}
