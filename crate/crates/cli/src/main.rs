//! `dymecu`: run, ablate, score and replay-check experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dymecu::config::RunConfig;
use dymecu::harness::{self, RunOptions, ScoreMetric, ScoreTable};
use dymecu::Error;

#[derive(Parser)]
#[command(name = "dymecu", version, about = "Curiosity-driven exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write logs, summary and CSV.
    Run(RunArgs),
    /// Run the variant x alpha ablation matrix with baselines and report BNS.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Quantity each run is scored by.
        #[arg(long, value_enum, default_value_t = Metric::Coverage)]
        metric: Metric,
    },
    /// Human- or baseline-normalized scores over a `game,random,human,...` CSV.
    Score(ScoreArgs),
    /// Run a config twice and compare the outputs byte for byte.
    ReplayCheck(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run config.
    #[arg(long)]
    config: PathBuf,
    /// Use seeds 0..N instead of the config's list.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output root; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds trained in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write per-seed checkpoints.
    #[arg(long)]
    checkpoints: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    table: PathBuf,
    /// Method column to score.
    #[arg(long)]
    method: String,
    /// Reference mean HNS to report the difference from.
    #[arg(long)]
    reference: Option<f64>,
    /// Score against the average of these columns instead of `human` (BNS).
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Coverage,
    Return,
    CumulativeCoverage,
}

impl From<Metric> for ScoreMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Coverage => ScoreMetric::Coverage,
            Metric::Return => ScoreMetric::Return,
            Metric::CumulativeCoverage => ScoreMetric::CumulativeCoverage,
        }
    }
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<(RunConfig, RunOptions)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(n) = self.seeds {
            if n == 0 {
                bail!("--seeds must be at least 1");
            }
            cfg.seeds = (0..n).collect();
        }
        let opts = RunOptions {
            out_dir: self.out.clone(),
            jobs: self.jobs.max(1),
            checkpoints: self.checkpoints,
        };
        Ok((cfg, opts))
    }
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let (cfg, opts) = args.load()?;
    let res = harness::run_experiment(&cfg, &opts)?;
    println!("wrote {}", res.dir.display());
    for (k, v) in &res.summary.mean {
        println!("{k:>20}  mean {v:.4}  std {:.4}", res.summary.std[k]);
    }
    Ok(())
}

fn ablate(args: &RunArgs, metric: Metric) -> anyhow::Result<()> {
    let (cfg, opts) = args.load()?;
    let report = harness::run_ablation(&cfg, &opts, metric.into())?;
    println!("random {:.4}  baseline avg {:.4}", report.random, report.baseline_avg);
    if report.inverted {
        println!("warning: baselines do not beat the random policy; BNS ordering is reversed");
    }
    for r in &report.runs {
        let bns = r.bns.map_or("undefined".to_string(), |b| format!("{b:.3}"));
        println!("{:<48} score {:.4}  BNS {bns}", r.name, r.score);
    }
    Ok(())
}

fn score(args: &ScoreArgs) -> anyhow::Result<()> {
    let table = ScoreTable::load(&args.table)?;
    if args.baselines.is_empty() {
        let report = harness::aggregate(&table, &args.method)?;
        for row in &report.rows {
            let h = row.hns.map_or("undefined".to_string(), |h| format!("{h:.4}"));
            let flag = if row.flagged { "  (flagged: human <= random)" } else { "" };
            println!("{:<16} {h}{flag}", row.game);
        }
        println!("mean HNS (all rows)       {:.4}", report.mean_hns_all);
        if let Some(m) = report.mean_hns_unflagged {
            println!("mean HNS (unflagged rows) {m:.4}");
        }
        println!("#SOTA                     {}", report.n_sota);
        if let Some(r) = args.reference {
            println!("delta to reference {r}: {:+.4}", report.mean_hns_all - r);
        }
        return Ok(());
    }
    let k = table.method_index(&args.method)?;
    let cols = args
        .baselines
        .iter()
        .map(|b| table.method_index(b))
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::new();
    for row in &table.rows {
        let avg = cols.iter().map(|&j| row.scores[j]).sum::<f64>() / cols.len() as f64;
        match harness::bns(row.scores[k], row.random, avg) {
            Ok(b) => {
                println!("{:<16} {b:.4}", row.game);
                values.push(b);
            }
            Err(e) => println!("{:<16} undefined ({e})", row.game),
        }
    }
    if values.is_empty() {
        bail!("no row has a usable BNS denominator");
    }
    println!("mean BNS {:.4}", values.iter().sum::<f64>() / values.len() as f64);
    Ok(())
}

fn replay_check(args: &RunArgs) -> anyhow::Result<bool> {
    let (cfg, opts) = args.load()?;
    let report = harness::replay_check(&cfg, &opts)?;
    println!(
        "summary {}  logs {}",
        if report.summary_identical { "identical" } else { "DIFFERENT" },
        if report.logs_identical { "identical" } else { "DIFFERENT" },
    );
    Ok(report.ok())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Diverged { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a).context("run failed"),
        Command::Ablate { run, metric } => ablate(run, *metric).context("ablation failed"),
        Command::Score(a) => score(a).context("scoring failed"),
        Command::ReplayCheck(a) => match replay_check(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(4),
            Err(e) => Err(e.context("replay check failed")),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
