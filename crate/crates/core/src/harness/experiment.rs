//! Multi-seed runs and their on-disk outputs.
//!
//! A run directory holds `config.toml`, one `seed_<n>.jsonl` metrics log per
//! seed, `summary.json` and `metrics.csv` with `(step, metric, mean, std)`
//! rows aggregated across seeds. The summary contains nothing time- or
//! path-dependent, so identical configs give byte-identical summaries.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::stats::mean_std;
use crate::train::{train_loop, IterationRecord, RunOutput};

/// Per-iteration fields exported to `metrics.csv`, in column order.
pub const CSV_METRICS: [&str; 13] = [
    "episode_return_mean",
    "episode_length_mean",
    "episode_coverage_mean",
    "cumulative_coverage",
    "intrinsic_raw_mean",
    "intrinsic_raw_std",
    "intrinsic_norm_mean",
    "intrinsic_norm_std",
    "module_loss",
    "module_loss_secondary",
    "policy_loss",
    "value_loss",
    "entropy",
];

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub out_dir: Option<PathBuf>,
    /// Seeds trained concurrently.
    pub jobs: usize,
    /// Write the final (and phase-switch) checkpoint of every seed.
    pub checkpoints: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out_dir: None,
            jobs: 1,
            checkpoints: false,
        }
    }
}

impl RunOptions {
    pub fn run_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| cfg.resolved_output_dir())
            .join(&cfg.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: usize,
    pub episodes: usize,
    /// Mean per-episode coverage over the final `coverage_window` of the run.
    pub final_coverage: Option<f64>,
    /// Mean extrinsic return over the same window.
    pub final_return: Option<f64>,
    pub cumulative_coverage: f64,
    pub policy_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub config: RunConfig,
    pub seeds: Vec<SeedSummary>,
    /// Across-seed mean and population std of each seed-level metric, over
    /// the seeds where it is defined.
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

impl Summary {
    pub fn from_outputs(cfg: &RunConfig, outputs: &[(u64, RunOutput)]) -> Self {
        let seeds: Vec<SeedSummary> = outputs
            .iter()
            .map(|(seed, out)| SeedSummary {
                seed: *seed,
                iterations: out.log.records.len(),
                episodes: out.log.episodes.len(),
                final_coverage: out.log.final_coverage(cfg.total_steps, cfg.coverage_window),
                final_return: out.log.final_return(cfg.total_steps, cfg.coverage_window),
                cumulative_coverage: out.log.cumulative_coverage(),
                policy_checksum: out.checkpoint.policy.policy.params.checksum(),
            })
            .collect();
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        let columns: [(&str, fn(&SeedSummary) -> Option<f64>); 3] = [
            ("final_coverage", |s| s.final_coverage),
            ("final_return", |s| s.final_return),
            ("cumulative_coverage", |s| Some(s.cumulative_coverage)),
        ];
        for (name, get) in columns {
            let xs: Vec<f64> = seeds.iter().filter_map(get).collect();
            if !xs.is_empty() {
                let (m, s) = mean_std(&xs);
                mean.insert(name.to_string(), m);
                std.insert(name.to_string(), s);
            }
        }
        Self {
            name: cfg.name.clone(),
            config: cfg.clone(),
            seeds,
            mean,
            std,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Train every seed of `cfg` and write the run directory.
pub fn run_experiment(cfg: &RunConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let dir = opts.run_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("config.toml"), &cfg.to_toml()?)?;

    let results = run_seeds(cfg, opts, &dir);
    let mut outputs = Vec::with_capacity(cfg.seeds.len());
    for (seed, res) in cfg.seeds.iter().zip(results) {
        outputs.push((*seed, res?));
    }
    let summary = Summary::from_outputs(cfg, &outputs);
    write(&dir.join("summary.json"), &summary.to_json()?)?;
    write_metrics_csv(&dir.join("metrics.csv"), &outputs)?;
    Ok(ExperimentResult { dir, summary })
}

fn run_seeds(cfg: &RunConfig, opts: &RunOptions, dir: &Path) -> Vec<Result<RunOutput>> {
    let n = cfg.seeds.len();
    let slots: Mutex<Vec<Option<Result<RunOutput>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n {
            break;
        }
        let res = run_one(cfg, cfg.seeds[i], opts, dir);
        slots.lock().expect("worker panicked")[i] = Some(res);
    };
    let workers = opts.jobs.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 1..workers {
            s.spawn(work);
        }
        work();
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

fn run_one(cfg: &RunConfig, seed: u64, opts: &RunOptions, dir: &Path) -> Result<RunOutput> {
    log::info!("{}: seed {seed} started", cfg.name);
    let out = match train_loop(cfg, seed, &mut ()) {
        Ok(out) => out,
        Err(Error::Diverged {
            step,
            reason,
            checkpoint,
        }) => {
            let path = dir.join(format!("seed_{seed}_diverged.json"));
            checkpoint.save(&path)?;
            log::error!("{}: seed {seed} diverged at step {step}; last finite state in {}", cfg.name, path.display());
            return Err(Error::Diverged {
                step,
                reason,
                checkpoint,
            });
        }
        Err(e) => return Err(e),
    };
    let mut jsonl = String::new();
    for r in &out.log.records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    write(&dir.join(format!("seed_{seed}.jsonl")), &jsonl)?;
    if opts.checkpoints {
        out.checkpoint.save(&dir.join(format!("seed_{seed}.ckpt.json")))?;
        if let Some(pre) = &out.pretrain_checkpoint {
            pre.save(&dir.join(format!("seed_{seed}_pretrain.ckpt.json")))?;
        }
    }
    log::info!("{}: seed {seed} finished", cfg.name);
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Numeric value of one exported field of a record.
pub fn record_metric(r: &IterationRecord, metric: &str) -> Option<f64> {
    match metric {
        "episode_return_mean" => r.episode_return_mean,
        "episode_length_mean" => r.episode_length_mean,
        "episode_coverage_mean" => r.episode_coverage_mean,
        "cumulative_coverage" => Some(r.cumulative_coverage),
        "intrinsic_raw_mean" => Some(r.intrinsic_raw_mean),
        "intrinsic_raw_std" => Some(r.intrinsic_raw_std),
        "intrinsic_norm_mean" => Some(r.intrinsic_norm_mean),
        "intrinsic_norm_std" => Some(r.intrinsic_norm_std),
        "module_loss" => r.module_loss,
        "module_loss_secondary" => r.module_loss_secondary,
        "policy_loss" => Some(r.policy_loss),
        "value_loss" => Some(r.value_loss),
        "entropy" => Some(r.entropy),
        _ => None,
    }
}

/// Rows `(step, metric, mean, std)`; seeds where a metric is undefined at a
/// step are left out of that row, and rows with no defined value are omitted.
fn write_metrics_csv(path: &Path, outputs: &[(u64, RunOutput)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "metric", "mean", "std"])?;
    let iterations = outputs.iter().map(|(_, o)| o.log.records.len()).min().unwrap_or(0);
    for i in 0..iterations {
        let step = outputs[0].1.log.records[i].step;
        for metric in CSV_METRICS {
            let xs: Vec<f64> = outputs
                .iter()
                .filter_map(|(_, o)| record_metric(&o.log.records[i], metric))
                .collect();
            if xs.is_empty() {
                continue;
            }
            let (m, s) = mean_std(&xs);
            w.write_record([step.to_string(), metric.to_string(), m.to_string(), s.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Read a `seed_<n>.jsonl` log back.
pub fn read_jsonl(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub summary_identical: bool,
    /// Per-seed logs equal once wall-clock readings are dropped.
    pub logs_identical: bool,
    pub dirs: [PathBuf; 2],
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.summary_identical && self.logs_identical
    }
}

/// Run the same experiment twice into sibling directories and compare.
pub fn replay_check(cfg: &RunConfig, opts: &RunOptions) -> Result<ReplayReport> {
    let base = opts.run_dir(cfg).join("replay");
    let mut dirs = Vec::new();
    for tag in ["a", "b"] {
        let o = RunOptions {
            out_dir: Some(base.join(tag)),
            checkpoints: false,
            ..opts.clone()
        };
        dirs.push(run_experiment(cfg, &o)?.dir);
    }
    let read = |p: PathBuf| fs::read(&p).map_err(|e| Error::io(&p, e));
    let summary_identical = read(dirs[0].join("summary.json"))? == read(dirs[1].join("summary.json"))?;
    let mut logs_identical = true;
    for seed in &cfg.seeds {
        let name = format!("seed_{seed}.jsonl");
        let strip = |v: Vec<IterationRecord>| -> Vec<IterationRecord> {
            v.into_iter()
                .map(|mut r| {
                    r.wall_clock = 0.0;
                    r
                })
                .collect()
        };
        let a = strip(read_jsonl(&dirs[0].join(&name))?);
        let b = strip(read_jsonl(&dirs[1].join(&name))?);
        logs_identical &= a == b;
    }
    Ok(ReplayReport {
        summary_identical,
        logs_identical,
        dirs: [dirs[0].clone(), dirs[1].clone()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use crate::module::ModuleKind;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::new("exp", EnvConfig::grid(4, 4, 20), ModuleKind::Dymecu);
        cfg.seeds = vec![0, 1, 2];
        cfg.total_steps = 256;
        cfg.ppo.rollout_steps = Some(64);
        cfg.ppo.hidden = vec![8];
        cfg.curiosity.hidden = vec![8];
        cfg.curiosity.latent_dim = 4;
        cfg.curiosity.minibatch = 32;
        cfg
    }

    #[test]
    fn writes_run_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(tmp.path().to_path_buf()),
            jobs: 2,
            checkpoints: true,
        };
        let res = run_experiment(&small(), &opts).unwrap();
        for f in ["config.toml", "summary.json", "metrics.csv", "seed_0.jsonl", "seed_2.jsonl", "seed_1.ckpt.json"] {
            assert!(res.dir.join(f).exists(), "{f}");
        }
        assert_eq!(read_jsonl(&res.dir.join("seed_1.jsonl")).unwrap().len(), 4);
        let cfg = RunConfig::load(&res.dir.join("config.toml")).unwrap();
        assert_eq!(cfg, small());
    }

    #[test]
    fn csv_means_match_jsonl() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(tmp.path().to_path_buf()),
            ..RunOptions::default()
        };
        let cfg = small();
        let res = run_experiment(&cfg, &opts).unwrap();
        let logs: Vec<Vec<IterationRecord>> = cfg
            .seeds
            .iter()
            .map(|s| read_jsonl(&res.dir.join(format!("seed_{s}.jsonl"))).unwrap())
            .collect();
        let mut rdr = csv::Reader::from_path(res.dir.join("metrics.csv")).unwrap();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let step: usize = rec[0].parse().unwrap();
            let mean: f64 = rec[2].parse().unwrap();
            let i = logs[0].iter().position(|r| r.step == step).unwrap();
            let xs: Vec<f64> = logs.iter().filter_map(|l| record_metric(&l[i], &rec[1])).collect();
            let want = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((mean - want).abs() <= 1e-12, "{} at {step}", &rec[1]);
            rows += 1;
        }
        assert!(rows >= 4 * 10);
    }

    #[test]
    fn parallel_matches_sequential() {
        let tmp = tempfile::tempdir().unwrap();
        let run = |jobs, sub: &str| {
            let opts = RunOptions {
                out_dir: Some(tmp.path().join(sub)),
                jobs,
                checkpoints: false,
            };
            fs::read(run_experiment(&small(), &opts).unwrap().dir.join("summary.json")).unwrap()
        };
        assert_eq!(run(1, "seq"), run(3, "par"));
    }

    #[test]
    fn replay_is_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(tmp.path().to_path_buf()),
            ..RunOptions::default()
        };
        let mut cfg = small();
        cfg.seeds = vec![4];
        let report = replay_check(&cfg, &opts).unwrap();
        assert!(report.ok(), "{report:?}");
    }

    #[test]
    fn invalid_config_fails_before_writing() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.curiosity.alpha = 2.0;
        let opts = RunOptions {
            out_dir: Some(tmp.path().to_path_buf()),
            ..RunOptions::default()
        };
        assert!(run_experiment(&cfg, &opts).is_err());
        assert!(!tmp.path().join("exp").exists());
    }
}
