//! Ablation matrix: DyMeCu variants across memory decay rates, scored against
//! the baseline modules and a random policy with BNS.

use std::fs;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, RunOptions, Summary};
use super::scores::bns;
use crate::config::RunConfig;
use crate::curiosity::MemorySource;
use crate::error::{Error, Result};
use crate::module::ModuleKind;

pub const ALPHAS: [f64; 3] = [0.99, 0.999, 0.9999];
pub const BASELINES: [ModuleKind; 3] = [ModuleKind::Rnd, ModuleKind::Icm, ModuleKind::Disagreement];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dual,
    OneLearner,
    /// Dual learners, memory tracking learner 1 only.
    OneSourceUpdate,
    PredictorHeads,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Dual,
        Variant::OneLearner,
        Variant::OneSourceUpdate,
        Variant::PredictorHeads,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Dual => "dual",
            Variant::OneLearner => "one_learner",
            Variant::OneSourceUpdate => "one_source_update",
            Variant::PredictorHeads => "predictor_heads",
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.curiosity;
        c.memory_source = MemorySource::Both;
        c.module = match self {
            Variant::Dual => ModuleKind::Dymecu,
            Variant::OneLearner => ModuleKind::DymecuOneLearner,
            Variant::OneSourceUpdate => {
                c.memory_source = MemorySource::Learner1;
                ModuleKind::Dymecu
            }
            Variant::PredictorHeads => ModuleKind::DymecuPredictorHeads,
        };
    }
}

/// Quantity a run is scored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    /// Mean per-episode coverage at the end of the run.
    #[default]
    Coverage,
    /// Mean extrinsic return at the end of the run.
    Return,
    CumulativeCoverage,
}

impl ScoreMetric {
    pub fn key(&self) -> &'static str {
        match self {
            ScoreMetric::Coverage => "final_coverage",
            ScoreMetric::Return => "final_return",
            ScoreMetric::CumulativeCoverage => "cumulative_coverage",
        }
    }

    pub fn of(&self, summary: &Summary) -> Result<f64> {
        summary.mean.get(self.key()).copied().ok_or_else(|| {
            Error::contract(format!(
                "run `{}` has no `{}`; no episode ended in the scoring window",
                summary.name,
                self.key()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Role {
    Variant { variant: Variant, alpha: f64 },
    Baseline { module: ModuleKind },
    /// Untrained near-uniform policy, no curiosity.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    pub role: Role,
    pub config: RunConfig,
}

/// Every run of the matrix: 4 variants x 3 decay rates, the 3 baseline
/// modules, and the random-policy reference. All share the base config's
/// env, seeds, schedule and reward coefficients.
pub fn expand(base: &RunConfig) -> Vec<PlannedRun> {
    let mut runs = Vec::new();
    for variant in Variant::ALL {
        for alpha in ALPHAS {
            let mut cfg = base.clone();
            variant.apply(&mut cfg);
            cfg.curiosity.alpha = alpha;
            cfg.name = format!("{}-{}-a{alpha}", base.name, variant.as_str());
            runs.push(PlannedRun {
                role: Role::Variant { variant, alpha },
                config: cfg,
            });
        }
    }
    for module in BASELINES {
        let mut cfg = base.clone();
        cfg.curiosity.module = module;
        cfg.curiosity.memory_source = MemorySource::Both;
        cfg.name = format!("{}-{}", base.name, module.as_str());
        runs.push(PlannedRun {
            role: Role::Baseline { module },
            config: cfg,
        });
    }
    let mut cfg = base.clone();
    cfg.curiosity.module = ModuleKind::None;
    cfg.curiosity.memory_source = MemorySource::Both;
    cfg.ppo.lr = 0.0;
    cfg.name = format!("{}-random", base.name);
    runs.push(PlannedRun {
        role: Role::Random,
        config: cfg,
    });
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub name: String,
    #[serde(flatten)]
    pub role: Role,
    pub score: f64,
    /// Undefined when the baseline average equals the random score.
    pub bns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub metric: ScoreMetric,
    pub random: f64,
    pub baseline_avg: f64,
    /// The baseline average does not exceed the random score, so BNS has a
    /// zero or negative denominator and its ordering is reversed.
    pub inverted: bool,
    pub runs: Vec<ScoredRun>,
}

impl AblationReport {
    pub fn variant(&self, variant: Variant, alpha: f64) -> Option<&ScoredRun> {
        self.runs.iter().find(|r| r.role == Role::Variant { variant, alpha })
    }
}

/// Score finished runs. `summaries` must be in `expand` order.
pub fn score_runs(plan: &[PlannedRun], summaries: &[Summary], metric: ScoreMetric) -> Result<AblationReport> {
    if plan.len() != summaries.len() {
        return Err(Error::contract("one summary per planned run"));
    }
    let scores = summaries.iter().map(|s| metric.of(s)).collect::<Result<Vec<_>>>()?;
    let random = plan
        .iter()
        .zip(&scores)
        .find(|(p, _)| p.role == Role::Random)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::contract("plan has no random-policy run"))?;
    let base: Vec<f64> = plan
        .iter()
        .zip(&scores)
        .filter(|(p, _)| matches!(p.role, Role::Baseline { .. }))
        .map(|(_, s)| *s)
        .collect();
    if base.is_empty() {
        return Err(Error::contract("plan has no baseline runs"));
    }
    let baseline_avg = base.iter().sum::<f64>() / base.len() as f64;
    let inverted = baseline_avg <= random;
    if inverted {
        log::warn!("baseline average {baseline_avg} does not exceed the random score {random}; BNS is inverted");
    }
    let runs = plan
        .iter()
        .zip(summaries)
        .zip(&scores)
        .map(|((p, s), &score)| ScoredRun {
            name: s.name.clone(),
            role: p.role.clone(),
            score,
            bns: match bns(score, random, baseline_avg) {
                Ok(v) => Some(v),
                Err(_) => {
                    log::warn!("baseline average equals the random score; BNS undefined");
                    None
                }
            },
        })
        .collect();
    Ok(AblationReport {
        metric,
        random,
        baseline_avg,
        inverted,
        runs,
    })
}

/// Run the whole matrix and write `<base name>-ablation.json` beside the runs.
pub fn run_ablation(base: &RunConfig, opts: &RunOptions, metric: ScoreMetric) -> Result<AblationReport> {
    base.validate()?;
    let plan = expand(base);
    let mut summaries = Vec::with_capacity(plan.len());
    for p in &plan {
        log::info!("ablation run {}", p.config.name);
        summaries.push(run_experiment(&p.config, opts)?.summary);
    }
    let report = score_runs(&plan, &summaries, metric)?;
    let root = opts.out_dir.clone().unwrap_or_else(|| base.resolved_output_dir());
    let path = root.join(format!("{}-ablation.json", base.name));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;
    use std::collections::BTreeMap;

    #[test]
    fn matrix_shape() {
        let base = RunConfig::new("g", EnvConfig::grid(5, 5, 20), ModuleKind::Dymecu);
        let plan = expand(&base);
        assert_eq!(plan.len(), 12 + 3 + 1);
        let mut names: Vec<&str> = plan.iter().map(|p| p.config.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), plan.len());
        for alpha in ALPHAS {
            let n = plan
                .iter()
                .filter(|p| matches!(p.role, Role::Variant { alpha: a, .. } if a == alpha))
                .count();
            assert_eq!(n, 4);
        }
        for p in &plan {
            p.config.validate().unwrap();
            assert_eq!(p.config.seeds, base.seeds);
            assert_eq!(p.config.env, base.env);
            if let Role::Variant { alpha, variant } = p.role {
                assert_eq!(p.config.curiosity.alpha, alpha);
                let one_source = p.config.curiosity.memory_source == MemorySource::Learner1;
                assert_eq!(one_source, variant == Variant::OneSourceUpdate);
            }
        }
        let random = plan.iter().find(|p| p.role == Role::Random).unwrap();
        assert_eq!(random.config.ppo.lr, 0.0);
        assert_eq!(random.config.curiosity.module, ModuleKind::None);
    }

    fn fake_summary(name: &str, score: f64) -> Summary {
        let cfg = RunConfig::new(name, EnvConfig::grid(5, 5, 20), ModuleKind::None);
        Summary {
            name: name.into(),
            config: cfg,
            seeds: vec![],
            mean: BTreeMap::from([("final_coverage".to_string(), score)]),
            std: BTreeMap::new(),
        }
    }

    #[test]
    fn bns_from_scores() {
        let base = RunConfig::new("g", EnvConfig::grid(5, 5, 20), ModuleKind::Dymecu);
        let plan = expand(&base);
        let summaries: Vec<Summary> = plan
            .iter()
            .map(|p| {
                let s = match p.role {
                    Role::Random => 200.0,
                    Role::Baseline { .. } => 300.0,
                    Role::Variant { .. } => 400.0,
                };
                fake_summary(&p.config.name, s)
            })
            .collect();
        let report = score_runs(&plan, &summaries, ScoreMetric::Coverage).unwrap();
        assert_eq!(report.baseline_avg, 300.0);
        assert_eq!(report.variant(Variant::Dual, 0.999).unwrap().bns, Some(2.0));
        assert!(!report.inverted);
        assert!(score_runs(&plan, &summaries, ScoreMetric::Return).is_err());
    }
}
