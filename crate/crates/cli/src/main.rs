use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use harness::config::{AttackKind, ExperimentConfig};
use harness::pipeline;
use harness::{HarnessError, Result};
use sgattack::attacks::AttackTarget;
use sgattack::graph::EdgeListFormat;

#[derive(Parser)]
#[command(name = "sgattack", version, about = "Sign-flipping poisoning attacks on signed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load an edge list, print its statistics and dump the largest component.
    Ingest {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "rated")]
        format: Format,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run attack trials and record victim test AUC per checkpoint.
    Attack(Common),
    /// Fit detectors on a clean corpus and score poisoned graphs.
    Detect(Common),
    /// Time one attack step per target.
    Bench(Common),
    /// Balance report of a graph file.
    Metrics {
        path: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Plain,
    Rated,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Rand,
    GreedyTriads,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single trial with this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single attack power (fraction of edges); replaces the checkpoints.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.trials = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(p) = self.power {
            cfg.overrides.checkpoints = Some(vec![p]);
        }
        if let Some(l) = self.lambda {
            cfg.overrides.lambda = Some(l);
        }
        if let Some(e) = self.eta {
            cfg.overrides.eta = Some(e);
        }
        if let Some(t) = &self.target {
            cfg.target = t.parse::<AttackTarget>()?;
        }
        if let Some(b) = self.baseline {
            cfg.attack = match b {
                Baseline::Rand => AttackKind::Rand,
                Baseline::GreedyTriads => AttackKind::GreedyTriads,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { path, format, out } => {
            let format = match format {
                Format::Plain => EdgeListFormat::Plain,
                Format::Rated => EdgeListFormat::Rated,
            };
            let r = pipeline::cmd_ingest(&path, format, &out)?;
            println!(
                "nodes {}  directed edges {}  positive ratio {:.2}  (undirected {} / {:.2}, lcc {} nodes)",
                r.nodes, r.directed_edges, r.directed_positive_ratio, r.edges, r.positive_ratio, r.lcc_nodes
            );
        }
        Command::Attack(c) => {
            let rows = pipeline::cmd_attack(&c.resolve()?)?;
            for r in rows {
                println!("seed {} power {:.3} {} {}: {:.4} -> {:.4}", r.seed, r.power, r.attack, r.model, r.auc_clean, r.auc_poisoned);
            }
        }
        Command::Detect(c) => {
            let s = pipeline::cmd_detect(&c.resolve()?)?;
            println!("metric view AUC {:.4}", s.metric_auc);
            println!("tsvd view AUC   {:.4}", s.tsvd_auc);
            for (st, auc) in &s.ensemble {
                println!("ensemble {:<4} AUC {auc:.4}", serde_json::to_value(st).map_err(HarnessError::from)?.as_str().unwrap_or(""));
            }
        }
        Command::Bench(c) => {
            for r in pipeline::cmd_bench(&c.resolve()?)? {
                println!("{:<12} n={} {:.4} s/flip", r.attack, r.n, r.seconds_per_flip);
            }
        }
        Command::Metrics { path, t } => {
            println!("{}", pipeline::cmd_metrics(&path, t)?.to_json()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
