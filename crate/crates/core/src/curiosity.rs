//! Dynamic-memory curiosity.
//!
//! Two learner encoders `f1`, `f2` and one memory encoder `M` share an
//! architecture. Each learner regresses onto the memory's latent,
//! `L_i = |f_i(s) - M(s)|^2`, with the memory held fixed. After every learner
//! step the memory absorbs the learners through an exponential moving average,
//! `w <- alpha * w + (1 - alpha) * (t1 + t2) / 2`. The intrinsic reward of a
//! state is the squared gap between the learners, `|f1(s) - f2(s)|^2`, which
//! equals `|(f1 - M) - (f2 - M)|^2`: states the memory has absorbed pull both
//! learners onto the same target and stop being rewarding.
//!
//! Ablations covered here: a single learner rewarded against the memory,
//! memory consolidated from only one of two learners, and learners extended
//! with trainable predictor heads on top of the shared architecture.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::nn::{
    ema_blend, squared_distance, Activation, Mlp, MlpSpec, OptState, OptimizerKind, ParamVector,
};
use crate::stats::RewardNormalizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Learner1,
    Learner2,
}

impl LearnerId {
    fn index(self) -> usize {
        match self {
            LearnerId::Learner1 => 0,
            LearnerId::Learner2 => 1,
        }
    }
}

/// Which learners feed memory consolidation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemorySource {
    #[default]
    Both,
    Learner1,
    Learner2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryInit {
    /// Memory gets its own seeded initialization.
    #[default]
    Independent,
    /// Memory starts at the mean of the learners.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyMeCuConfig {
    pub encoder: MlpSpec,
    pub alpha: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub normalize: bool,
    /// `false` selects the single-learner ablation.
    pub dual: bool,
    pub memory_source: MemorySource,
    pub memory_init: MemoryInit,
}

impl DyMeCuConfig {
    pub fn new(encoder: MlpSpec) -> Self {
        Self {
            encoder,
            alpha: 0.99,
            lr: 1e-3,
            optimizer: OptimizerKind::adam(),
            normalize: true,
            dual: true,
            memory_source: MemorySource::Both,
            memory_init: MemoryInit::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyMeCuSeeds {
    pub learner1: u64,
    pub learner2: u64,
    pub memory: u64,
}

impl DyMeCuSeeds {
    /// Learner seeds `(seed, seed + 1)`, memory `seed + 2`.
    pub fn from_base(seed: u64) -> Self {
        Self {
            learner1: seed,
            learner2: seed.wrapping_add(1),
            memory: seed.wrapping_add(2),
        }
    }
}

/// An online learner: an encoder with the memory's architecture, optionally
/// followed by a predictor head mapping latent to latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub base: Mlp,
    base_opt: OptState,
    pub head: Option<Mlp>,
    head_opt: Option<OptState>,
}

impl Learner {
    fn new(base: Mlp, kind: OptimizerKind) -> Self {
        let base_opt = OptState::new(kind, &base.params);
        Self {
            base,
            base_opt,
            head: None,
            head_opt: None,
        }
    }

    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        let z = self.base.forward(s)?;
        match &self.head {
            Some(h) => h.forward(&z),
            None => Ok(z),
        }
    }

    pub fn num_params(&self) -> usize {
        self.base.params.len() + self.head.as_ref().map_or(0, |h| h.params.len())
    }

    /// One optimizer step on the mean of `|f(s) - target|^2` over the batch.
    /// Returns the mean loss before the step.
    fn step(&mut self, batch: &[Vec<f64>], targets: &[Vec<f64>], lr: f64) -> Result<f64> {
        let n = batch.len() as f64;
        let mut base_grad = self.base.zero_grad();
        let mut head_grad = self.head.as_ref().map(Mlp::zero_grad);
        let mut loss = 0.0;
        for (s, target) in batch.iter().zip(targets) {
            let base_trace = self.base.trace(s)?;
            let head_trace = match &self.head {
                Some(h) => Some(h.trace(base_trace.output())?),
                None => None,
            };
            let z = head_trace
                .as_ref()
                .map_or(base_trace.output(), |t| t.output());
            ensure_len("learner target", z.len(), target.len())?;
            let diff: Vec<f64> = z.iter().zip(target).map(|(a, b)| a - b).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>();
            let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * d / n).collect();
            let into_base = match (&self.head, &head_trace, &mut head_grad) {
                (Some(h), Some(t), Some(g)) => h
                    .accumulate(t, &upstream, g, true)?
                    .expect("input gradient requested"),
                _ => upstream,
            };
            self.base
                .accumulate(&base_trace, &into_base, &mut base_grad, false)?;
        }
        self.base_opt.apply(&mut self.base.params, &base_grad, lr)?;
        if let (Some(h), Some(opt), Some(g)) = (&mut self.head, &mut self.head_opt, &head_grad) {
            opt.apply(&mut h.params, g, lr)?;
        }
        Ok(loss / n)
    }
}

/// Squared Euclidean gap between two learner latents.
pub fn intrinsic_reward(z1: &[f64], z2: &[f64]) -> Result<f64> {
    squared_distance(z1, z2)
}

/// Per-learner regression losses against the memory latent.
pub fn learner_losses(z1: &[f64], z2: &[f64], zw: &[f64]) -> Result<(f64, f64)> {
    Ok((squared_distance(z1, zw)?, squared_distance(z2, zw)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnerLosses {
    pub learner1: f64,
    /// Absent for the single-learner variant.
    pub learner2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyMeCu {
    pub alpha: f64,
    pub lr: f64,
    pub memory_source: MemorySource,
    pub memory: Mlp,
    learners: Vec<Learner>,
    pub normalizer: RewardNormalizer,
}

impl DyMeCu {
    pub fn new(config: &DyMeCuConfig, seeds: DyMeCuSeeds) -> Result<Self> {
        config.encoder.validate()?;
        if !(0.0..=1.0).contains(&config.alpha) {
            return Err(Error::contract(format!(
                "decay rate {} outside [0, 1]",
                config.alpha
            )));
        }
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(Error::contract(format!("learning rate {} must be >= 0", config.lr)));
        }
        if !config.dual && config.memory_source != MemorySource::Both {
            return Err(Error::contract(
                "memory_source selects between two learners; the single-learner variant has one",
            ));
        }
        let mut learner_seeds = vec![seeds.learner1];
        if config.dual {
            if seeds.learner1 == seeds.learner2 {
                return Err(Error::contract("learners need distinct initialization seeds"));
            }
            learner_seeds.push(seeds.learner2);
        }
        let learners = learner_seeds
            .into_iter()
            .map(|seed| Mlp::new(config.encoder.clone(), seed).map(|m| Learner::new(m, config.optimizer)))
            .collect::<Result<Vec<_>>>()?;
        let mut memory = Mlp::new(config.encoder.clone(), seeds.memory)?;
        if config.memory_init == MemoryInit::Average {
            let sources: Vec<&ParamVector> = learners.iter().map(|l| &l.base.params).collect();
            memory.params = ema_blend(&memory.params, &sources, 0.0)?;
        }
        Ok(Self {
            alpha: config.alpha,
            lr: config.lr,
            memory_source: config.memory_source,
            memory,
            learners,
            normalizer: RewardNormalizer::new(config.normalize),
        })
    }

    pub fn is_dual(&self) -> bool {
        self.learners.len() == 2
    }

    pub fn input_dim(&self) -> usize {
        self.memory.spec.input_dim
    }

    pub fn learners(&self) -> &[Learner] {
        &self.learners
    }

    pub fn learner(&self, which: LearnerId) -> Result<&Learner> {
        self.learners
            .get(which.index())
            .ok_or_else(|| Error::contract("the single-learner variant has no second learner"))
    }

    pub fn learner_mut(&mut self, which: LearnerId) -> Result<&mut Learner> {
        self.learners
            .get_mut(which.index())
            .ok_or_else(|| Error::contract("the single-learner variant has no second learner"))
    }

    /// Overwrite learner 2 with an exact copy of learner 1, including optimizer
    /// moments. This breaks the distinct-initialization invariant on purpose:
    /// identical learners receive identical gradients and never separate.
    pub fn force_identical_learners(&mut self) -> Result<()> {
        if !self.is_dual() {
            return Err(Error::contract("requires two learners"));
        }
        self.learners[1] = self.learners[0].clone();
        Ok(())
    }

    /// Latents of learner 1, learner 2 and the memory.
    pub fn encode_all(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if !self.is_dual() {
            return Err(Error::contract("encode_all requires two learners"));
        }
        Ok((
            self.learners[0].forward(s)?,
            self.learners[1].forward(s)?,
            self.memory.forward(s)?,
        ))
    }

    /// `|f_theta(s) - M(s)|^2` for the single-learner variant.
    pub fn one_learner_reward(&self, s: &[f64]) -> Result<f64> {
        if self.is_dual() {
            return Err(Error::contract(
                "one_learner_reward is only defined for the single-learner variant",
            ));
        }
        squared_distance(&self.learners[0].forward(s)?, &self.memory.forward(s)?)
    }

    /// Unnormalized intrinsic reward of one state under the configured variant.
    pub fn raw_reward(&self, s: &[f64]) -> Result<f64> {
        if self.is_dual() {
            intrinsic_reward(&self.learners[0].forward(s)?, &self.learners[1].forward(s)?)
        } else {
            self.one_learner_reward(s)
        }
    }

    /// One optimizer step per learner on its mean regression loss over the
    /// batch. Memory latents are computed once up front and act as constants.
    pub fn update_learners(&mut self, batch: &[Vec<f64>]) -> Result<LearnerLosses> {
        if batch.is_empty() {
            return Err(Error::contract("update_learners needs a non-empty batch"));
        }
        let targets = batch
            .iter()
            .map(|s| self.memory.forward(s))
            .collect::<Result<Vec<_>>>()?;
        let lr = self.lr;
        let mut losses = self
            .learners
            .iter_mut()
            .map(|l| l.step(batch, &targets, lr))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        Ok(LearnerLosses {
            learner1: losses.next().unwrap_or(0.0),
            learner2: losses.next(),
        })
    }

    /// EMA of the memory toward the configured learner source(s).
    pub fn consolidate_memory(&mut self) -> Result<()> {
        let sources: Vec<&ParamVector> = match self.memory_source {
            MemorySource::Both => self.learners.iter().map(|l| &l.base.params).collect(),
            MemorySource::Learner1 => vec![&self.learners[0].base.params],
            MemorySource::Learner2 => vec![&self.learner(LearnerId::Learner2)?.base.params],
        };
        self.memory.params = ema_blend(&self.memory.params, &sources, self.alpha)?;
        Ok(())
    }

    /// EMA of the memory toward a single chosen learner.
    pub fn consolidate_memory_one_source(&mut self, which: LearnerId) -> Result<()> {
        if !self.is_dual() {
            return Err(Error::contract("consolidate_memory_one_source requires two learners"));
        }
        let src = &self.learners[which.index()].base.params;
        self.memory.params = ema_blend(&self.memory.params, &[src], self.alpha)?;
        Ok(())
    }

    /// Append a trainable head `latent -> extra_hidden.. -> latent` to every
    /// learner. The memory architecture is unchanged.
    pub fn with_predictor_heads(mut self, extra_hidden: &[usize], seed: u64) -> Result<Self> {
        let spec = self.head_spec(extra_hidden)?;
        for (k, learner) in self.learners.iter_mut().enumerate() {
            let head = Mlp::new(spec.clone(), seed.wrapping_add(k as u64))?;
            learner.head_opt = Some(OptState::new(learner.base_opt.kind(), &head.params));
            learner.head = Some(head);
        }
        Ok(self)
    }

    /// Predictor heads initialized to pass their input through unchanged.
    ///
    /// Uses `x = relu(x) - relu(-x)`: the first layer writes `[x, -x]`, hidden
    /// layers copy the nonnegative halves, the last layer subtracts them. Needs
    /// relu and every hidden width at least twice the latent dimension.
    pub fn with_identity_heads(mut self, extra_hidden: &[usize]) -> Result<Self> {
        let spec = self.head_spec(extra_hidden)?;
        let d = spec.output_dim;
        if spec.activation != Activation::Relu || extra_hidden.iter().any(|&h| h < 2 * d) {
            return Err(Error::contract(
                "identity heads need relu and hidden widths >= 2 * latent dim",
            ));
        }
        let mut params = ParamVector::zeros(spec.layout());
        let last = extra_hidden.len();
        for k in 0..d {
            params.set_weight(0, k, k, 1.0);
            params.set_weight(0, k, d + k, -1.0);
            for l in 1..last {
                params.set_weight(l, k, k, 1.0);
                params.set_weight(l, d + k, d + k, 1.0);
            }
            params.set_weight(last, k, k, 1.0);
            params.set_weight(last, d + k, k, -1.0);
        }
        let head = Mlp::with_params(spec, params)?;
        for learner in &mut self.learners {
            learner.head_opt = Some(OptState::new(learner.base_opt.kind(), &head.params));
            learner.head = Some(head.clone());
        }
        Ok(self)
    }

    fn head_spec(&self, extra_hidden: &[usize]) -> Result<MlpSpec> {
        if extra_hidden.is_empty() {
            return Err(Error::contract("predictor heads need at least one hidden layer"));
        }
        let d = self.memory.spec.output_dim;
        let spec = MlpSpec::new(d, extra_hidden.to_vec(), d, self.memory.spec.activation)?;
        ensure_len("predictor head output", d, spec.output_dim)?;
        Ok(spec)
    }

    pub fn normalize_reward(&mut self, raw: f64) -> f64 {
        self.normalizer.observe(raw);
        self.normalizer.normalize(raw)
    }

    pub fn is_finite(&self) -> bool {
        self.memory.params.is_finite()
            && self
                .learners
                .iter()
                .all(|l| l.base.params.is_finite() && l.head.as_ref().map_or(true, |h| h.params.is_finite()))
    }
}
