//! Run configuration: one TOML document describes a whole experiment.
//!
//! Parsing rejects unknown keys and reports problems with the line they occur
//! on. Serialization is canonical (fixed field order), so
//! `RunConfig::from_toml(&cfg.to_toml()?)` reproduces `cfg` exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curiosity::DyMeCuSeeds;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::module::{CuriosityConfig, ModuleKind};
use crate::ppo::PpoConfig;

/// Training regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Intrinsic and extrinsic reward mixed for the whole run.
    #[default]
    Joint,
    /// `pretrain_steps` with intrinsic reward only, then extrinsic only.
    PretrainThenFinetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    /// Env steps per run, across both phases.
    pub total_steps: usize,
    #[serde(default)]
    pub mode: Mode,
    /// Length of the intrinsic-only phase; `pretrain_then_finetune` only.
    #[serde(default)]
    pub pretrain_steps: usize,
    /// Relative paths resolve against `$DYMECU_OUTPUT_ROOT` when set.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Fraction of the run, counted back from the end, over which the final
    /// per-episode coverage is averaged.
    #[serde(default = "default_coverage_window")]
    pub coverage_window: f64,
    pub env: EnvConfig,
    pub curiosity: CuriosityConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_coverage_window() -> f64 {
    0.1
}

pub const OUTPUT_ROOT_VAR: &str = "DYMECU_OUTPUT_ROOT";

impl RunConfig {
    pub fn new(name: impl Into<String>, env: EnvConfig, module: ModuleKind) -> Self {
        Self {
            name: name.into(),
            seeds: vec![0],
            total_steps: 50_000,
            mode: Mode::Joint,
            pretrain_steps: 0,
            output_dir: default_output_dir(),
            coverage_window: default_coverage_window(),
            env,
            curiosity: CuriosityConfig::new(module),
            ppo: PpoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.name.is_empty() {
            return fail("name must be non-empty");
        }
        if self.seeds.is_empty() {
            return fail("seeds must list at least one seed");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return fail("seeds must be distinct");
        }
        if self.total_steps == 0 {
            return fail("total_steps must be positive");
        }
        match self.mode {
            Mode::Joint if self.pretrain_steps != 0 => {
                return fail("pretrain_steps requires mode = \"pretrain_then_finetune\"");
            }
            Mode::PretrainThenFinetune
                if self.pretrain_steps == 0 || self.pretrain_steps >= self.total_steps =>
            {
                return fail("pretrain_steps must lie strictly between 0 and total_steps");
            }
            _ => {}
        }
        if !(self.coverage_window > 0.0 && self.coverage_window <= 1.0) {
            return fail("coverage_window must lie in (0, 1]");
        }
        self.env.validate()?;
        self.curiosity.validate()?;
        self.ppo.validate()
    }

    /// Parse and validate. Errors carry the offending line when it can be found.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            Error::Config(with_line(line, e.message().trim()))
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config(msg) => Error::Config(with_line(locate_key(text, &msg), &msg)),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Output directory with `$DYMECU_OUTPUT_ROOT` applied.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}

fn with_line(line: Option<usize>, msg: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {msg}"),
        None => msg.to_string(),
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Find the 1-based line holding the key a validation message starts with,
/// e.g. `curiosity.alpha` or `total_steps`.
fn locate_key(text: &str, msg: &str) -> Option<usize> {
    let path = msg.split(|c: char| c.is_whitespace() || c == ':').next()?;
    let (table, key) = match path.split_once('.') {
        Some((t, k)) => (Some(t), k),
        None => (None, path),
    };
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(header.trim().to_string());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        let k = k.trim();
        let here = match (table, current.as_deref()) {
            (None, None) => k == key,
            (Some(t), Some(c)) => t == c && k == key,
            // dotted keys at top level, e.g. `curiosity.alpha = 0.9`
            (Some(t), None) => k == format!("{t}.{key}"),
            (None, Some(_)) => false,
        };
        if here {
            return Some(i + 1);
        }
    }
    None
}

/// Per-run seeds derived from one run seed by fixed offsets, so that two runs
/// differing only in module configuration share env, policy and learner seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub learner1: u64,
    pub learner2: u64,
    pub memory: u64,
    pub policy: u64,
    pub env: u64,
    pub sampling: u64,
    pub module: u64,
}

impl SeedPlan {
    pub const STRIDE: u64 = 16;

    pub fn from_run_seed(seed: u64) -> Self {
        let base = seed.wrapping_mul(Self::STRIDE);
        Self {
            learner1: base,
            learner2: base.wrapping_add(1),
            memory: base.wrapping_add(2),
            policy: base.wrapping_add(3),
            env: base.wrapping_add(4),
            sampling: base.wrapping_add(5),
            module: base.wrapping_add(6),
        }
    }

    pub fn dymecu(&self) -> DyMeCuSeeds {
        DyMeCuSeeds {
            learner1: self.learner1,
            learner2: self.learner2,
            memory: self.memory,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curiosity::MemorySource;
    use crate::envs::EnvConfig;
    use proptest::prelude::*;

    const SAMPLE: &str = r#"
name = "grid_dymecu"
seeds = [0, 1, 2]
total_steps = 4096

[env]
kind = "grid"

[curiosity]
module = "dymecu"
alpha = 0.999
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.curiosity.alpha, 0.999);
        assert_eq!(cfg.env.width, 20);
        assert_eq!(cfg.ppo.zeta, 1.0);
        assert_eq!(cfg.ppo.beta, 2.0);
        assert_eq!(cfg.mode, Mode::Joint);
    }

    #[test]
    fn default_alpha() {
        let text = SAMPLE.replace("alpha = 0.999\n", "");
        assert_eq!(RunConfig::from_toml(&text).unwrap().curiosity.alpha, 0.99);
    }

    #[test]
    fn round_trip_is_exact() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml(&text).unwrap().to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = SAMPLE.replace("alpha = 0.999", "alpha = 0.999\nbogus = 3");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 12"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn invalid_value_reports_line() {
        let text = SAMPLE.replace("alpha = 0.999", "alpha = 1.5");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 11") && msg.contains("curiosity.alpha"), "{msg}");
        let text = SAMPLE.replace("total_steps = 4096", "total_steps = 0");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn type_error_reports_line() {
        let text = SAMPLE.replace("total_steps = 4096", "total_steps = \"many\"");
        let msg = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn mode_consistency() {
        let mut cfg = RunConfig::from_toml(SAMPLE).unwrap();
        cfg.pretrain_steps = 100;
        assert!(cfg.validate().is_err());
        cfg.mode = Mode::PretrainThenFinetune;
        assert!(cfg.validate().is_ok());
        cfg.pretrain_steps = cfg.total_steps;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_must_be_distinct() {
        let text = SAMPLE.replace("[0, 1, 2]", "[0, 1, 1]");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn seed_plan_offsets() {
        let p = SeedPlan::from_run_seed(2);
        assert_eq!(
            [p.learner1, p.learner2, p.memory, p.policy, p.env, p.sampling, p.module],
            [32, 33, 34, 35, 36, 37, 38]
        );
        // distinct runs never share a seed
        let q = SeedPlan::from_run_seed(3);
        assert!(q.learner1 > p.module);
    }

    proptest! {
        #[test]
        fn round_trip_any(
            alpha in 0.0f64..=1.0,
            lr in 1e-6f64..1e-1,
            zeta in 0.0f64..4.0,
            total in 1usize..1_000_000,
            seeds in proptest::collection::btree_set(0u64..1000, 1..6),
            one_source in any::<bool>(),
            rollout in proptest::option::of(1usize..4096),
        ) {
            let mut cfg = RunConfig::new("prop", EnvConfig::chain(12, 0.1, 50), ModuleKind::Dymecu);
            cfg.curiosity.alpha = alpha;
            cfg.curiosity.lr = lr;
            if one_source {
                cfg.curiosity.memory_source = MemorySource::Learner2;
            }
            cfg.ppo.zeta = zeta;
            cfg.ppo.rollout_steps = rollout;
            cfg.total_steps = total;
            cfg.seeds = seeds.into_iter().collect();
            let text = cfg.to_toml().unwrap();
            prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        }
    }
}
