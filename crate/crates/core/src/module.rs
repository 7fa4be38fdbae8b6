//! The curiosity-module role shared by DyMeCu, its ablations and the
//! baselines: score a batch of transitions, train on it, consolidate.

use serde::{Deserialize, Serialize};

use crate::baselines::{Disagreement, DisagreementConfig, Icm, IcmConfig, Rnd};
use crate::curiosity::{DyMeCu, DyMeCuConfig, DyMeCuSeeds, MemoryInit, MemorySource};
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Activation, MlpSpec, OptimizerKind};
use crate::stats::RewardNormalizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Dymecu,
    DymecuOneLearner,
    DymecuPredictorHeads,
    Rnd,
    Icm,
    Disagreement,
    None,
}

impl ModuleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModuleKind::Dymecu => "dymecu",
            ModuleKind::DymecuOneLearner => "dymecu_one_learner",
            ModuleKind::DymecuPredictorHeads => "dymecu_predictor_heads",
            ModuleKind::Rnd => "rnd",
            ModuleKind::Icm => "icm",
            ModuleKind::Disagreement => "disagreement",
            ModuleKind::None => "none",
        }
    }

    pub fn is_dymecu(&self) -> bool {
        matches!(
            self,
            ModuleKind::Dymecu | ModuleKind::DymecuOneLearner | ModuleKind::DymecuPredictorHeads
        )
    }
}

impl std::fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters of the curiosity module of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuriosityConfig {
    pub module: ModuleKind,
    /// Memory decay rate (dimensionless, in [0, 1]).
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    /// Learning rate of every curiosity network.
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    /// Scale intrinsic rewards by their running RMS.
    #[serde(default = "defaults::yes")]
    pub normalize: bool,
    #[serde(default)]
    pub memory_source: MemorySource,
    #[serde(default)]
    pub memory_init: MemoryInit,
    /// Hidden widths of the predictor heads (predictor-head variant only).
    #[serde(default = "defaults::head_hidden")]
    pub head_hidden: Vec<usize>,
    #[serde(default = "defaults::icm_forward_weight")]
    pub icm_forward_weight: f64,
    #[serde(default = "defaults::ensemble_size")]
    pub ensemble_size: usize,
    /// Passes over each rollout when training the module.
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    /// Transitions per module optimizer step.
    #[serde(default = "defaults::minibatch")]
    pub minibatch: usize,
}

mod defaults {
    pub fn alpha() -> f64 {
        0.99
    }
    pub fn latent_dim() -> usize {
        32
    }
    pub fn hidden() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn yes() -> bool {
        true
    }
    pub fn head_hidden() -> Vec<usize> {
        vec![32, 32]
    }
    pub fn icm_forward_weight() -> f64 {
        0.2
    }
    pub fn ensemble_size() -> usize {
        5
    }
    pub fn epochs() -> usize {
        2
    }
    pub fn minibatch() -> usize {
        256
    }
}

impl CuriosityConfig {
    pub fn new(module: ModuleKind) -> Self {
        Self {
            module,
            alpha: defaults::alpha(),
            latent_dim: defaults::latent_dim(),
            hidden: defaults::hidden(),
            lr: defaults::lr(),
            normalize: true,
            memory_source: MemorySource::Both,
            memory_init: MemoryInit::Independent,
            head_hidden: defaults::head_hidden(),
            icm_forward_weight: defaults::icm_forward_weight(),
            ensemble_size: defaults::ensemble_size(),
            epochs: defaults::epochs(),
            minibatch: defaults::minibatch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("curiosity.{m}")));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if self.latent_dim == 0 || self.hidden.contains(&0) || self.head_hidden.contains(&0) {
            return fail("layer widths must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and >= 0");
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return fail("epochs and minibatch must be positive");
        }
        if self.module == ModuleKind::Disagreement && self.ensemble_size < 2 {
            return fail("ensemble_size must be at least 2");
        }
        if self.module == ModuleKind::DymecuPredictorHeads && self.head_hidden.is_empty() {
            return fail("head_hidden must be non-empty for dymecu_predictor_heads");
        }
        if self.module == ModuleKind::DymecuOneLearner && self.memory_source != MemorySource::Both {
            return fail("memory_source must be `both` for dymecu_one_learner");
        }
        if !(0.0..=1.0).contains(&self.icm_forward_weight) {
            return fail("icm_forward_weight must lie in [0, 1]");
        }
        Ok(())
    }

    fn encoder_spec(&self, obs_dim: usize) -> Result<MlpSpec> {
        MlpSpec::new(obs_dim, self.hidden.clone(), self.latent_dim, Activation::Relu)
    }

    /// Build the module. `seeds` supplies learner/memory seeds; `module_seed`
    /// seeds baseline networks and predictor heads.
    pub fn build(
        &self,
        obs_dim: usize,
        n_actions: usize,
        seeds: DyMeCuSeeds,
        module_seed: u64,
    ) -> Result<CuriosityModule> {
        self.validate()?;
        Ok(match self.module {
            ModuleKind::Dymecu | ModuleKind::DymecuOneLearner | ModuleKind::DymecuPredictorHeads => {
                let mut cfg = DyMeCuConfig::new(self.encoder_spec(obs_dim)?);
                cfg.alpha = self.alpha;
                cfg.lr = self.lr;
                cfg.normalize = self.normalize;
                cfg.dual = self.module != ModuleKind::DymecuOneLearner;
                cfg.memory_source = self.memory_source;
                cfg.memory_init = self.memory_init;
                let mut m = DyMeCu::new(&cfg, seeds)?;
                if self.module == ModuleKind::DymecuPredictorHeads {
                    m = m.with_predictor_heads(&self.head_hidden, module_seed)?;
                }
                CuriosityModule::DyMeCu(m)
            }
            ModuleKind::Rnd => CuriosityModule::Rnd(Rnd::new(
                self.encoder_spec(obs_dim)?,
                self.lr,
                OptimizerKind::adam(),
                self.normalize,
                module_seed,
                seeds.learner1,
            )?),
            ModuleKind::Icm => {
                let mut cfg = IcmConfig::new(obs_dim, n_actions);
                cfg.feature_dim = self.latent_dim;
                cfg.hidden = self.hidden.clone();
                cfg.lr = self.lr;
                cfg.forward_weight = self.icm_forward_weight;
                cfg.normalize = self.normalize;
                CuriosityModule::Icm(Icm::new(&cfg, module_seed)?)
            }
            ModuleKind::Disagreement => {
                let mut cfg = DisagreementConfig::new(obs_dim, n_actions);
                cfg.feature_dim = self.latent_dim;
                cfg.hidden = self.hidden.clone();
                cfg.lr = self.lr;
                cfg.ensemble_size = self.ensemble_size;
                cfg.normalize = self.normalize;
                CuriosityModule::Disagreement(Disagreement::new(&cfg, module_seed)?)
            }
            ModuleKind::None => CuriosityModule::None,
        })
    }
}

/// Losses reported by one module training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModuleLosses {
    pub primary: f64,
    pub secondary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "module", content = "state", rename_all = "snake_case")]
pub enum CuriosityModule {
    DyMeCu(DyMeCu),
    Rnd(Rnd),
    Icm(Icm),
    Disagreement(Disagreement),
    None,
}

impl CuriosityModule {
    /// Raw intrinsic reward of each transition `(s, a, s')`. State-novelty
    /// modules score the state the transition arrives in.
    pub fn raw_rewards(
        &self,
        obs: &[Vec<f64>],
        actions: &[usize],
        next_obs: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        ensure_len("module actions", obs.len(), actions.len())?;
        ensure_len("module next observations", obs.len(), next_obs.len())?;
        match self {
            CuriosityModule::DyMeCu(m) => next_obs.iter().map(|s| m.raw_reward(s)).collect(),
            CuriosityModule::Rnd(m) => next_obs.iter().map(|s| m.reward(s)).collect(),
            CuriosityModule::Icm(m) => obs
                .iter()
                .zip(actions)
                .zip(next_obs)
                .map(|((s, &a), s2)| m.reward(s, a, s2))
                .collect(),
            CuriosityModule::Disagreement(m) => obs
                .iter()
                .zip(actions)
                .map(|(s, &a)| m.reward(s, a))
                .collect(),
            CuriosityModule::None => Ok(vec![0.0; obs.len()]),
        }
    }

    /// One optimizer step of the module's own networks on a minibatch.
    pub fn train_step(
        &mut self,
        obs: &[Vec<f64>],
        actions: &[usize],
        next_obs: &[Vec<f64>],
    ) -> Result<ModuleLosses> {
        Ok(match self {
            CuriosityModule::DyMeCu(m) => {
                let l = m.update_learners(next_obs)?;
                ModuleLosses {
                    primary: l.learner1,
                    secondary: l.learner2,
                }
            }
            CuriosityModule::Rnd(m) => ModuleLosses {
                primary: m.update(next_obs)?,
                secondary: None,
            },
            CuriosityModule::Icm(m) => {
                let l = m.update(obs, actions, next_obs)?;
                ModuleLosses {
                    primary: l.forward,
                    secondary: Some(l.inverse),
                }
            }
            CuriosityModule::Disagreement(m) => ModuleLosses {
                primary: m.update(obs, actions, next_obs)?,
                secondary: None,
            },
            CuriosityModule::None => ModuleLosses::default(),
        })
    }

    /// Memory consolidation. Returns whether the module has a memory.
    pub fn consolidate(&mut self) -> Result<bool> {
        match self {
            CuriosityModule::DyMeCu(m) => m.consolidate_memory().map(|_| true),
            _ => Ok(false),
        }
    }

    pub fn normalizer_mut(&mut self) -> Option<&mut RewardNormalizer> {
        match self {
            CuriosityModule::DyMeCu(m) => Some(&mut m.normalizer),
            CuriosityModule::Rnd(m) => Some(&mut m.normalizer),
            CuriosityModule::Icm(m) => Some(&mut m.normalizer),
            CuriosityModule::Disagreement(m) => Some(&mut m.normalizer),
            CuriosityModule::None => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            CuriosityModule::DyMeCu(m) => m.is_finite(),
            CuriosityModule::Rnd(m) => m.predictor.params.is_finite(),
            CuriosityModule::Icm(m) => {
                m.encoder.params.is_finite()
                    && m.forward_model.params.is_finite()
                    && m.inverse_model.params.is_finite()
            }
            CuriosityModule::Disagreement(m) => m.ensemble.iter().all(|e| e.model.params.is_finite()),
            CuriosityModule::None => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_builds_and_scores() {
        let obs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let next = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let actions = vec![1, 0];
        for kind in [
            ModuleKind::Dymecu,
            ModuleKind::DymecuOneLearner,
            ModuleKind::DymecuPredictorHeads,
            ModuleKind::Rnd,
            ModuleKind::Icm,
            ModuleKind::Disagreement,
            ModuleKind::None,
        ] {
            let mut cfg = CuriosityConfig::new(kind);
            cfg.hidden = vec![8];
            cfg.latent_dim = 4;
            cfg.head_hidden = vec![8];
            let mut m = cfg.build(3, 2, DyMeCuSeeds::from_base(0), 99).unwrap();
            let r = m.raw_rewards(&obs, &actions, &next).unwrap();
            assert_eq!(r.len(), 2);
            assert!(r.iter().all(|v| *v >= 0.0));
            if kind == ModuleKind::None {
                assert!(r.iter().all(|v| *v == 0.0));
            }
            m.train_step(&obs, &actions, &next).unwrap();
            assert_eq!(m.consolidate().unwrap(), kind.is_dymecu());
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = CuriosityConfig::new(ModuleKind::Dymecu);
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = CuriosityConfig::new(ModuleKind::Disagreement);
        cfg.ensemble_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = CuriosityConfig::new(ModuleKind::DymecuOneLearner);
        cfg.memory_source = MemorySource::Learner2;
        assert!(cfg.validate().is_err());
    }
}
