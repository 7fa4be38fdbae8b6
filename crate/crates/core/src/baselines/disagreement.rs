use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::icm::{concat, one_hot};
use crate::error::{ensure_len, Error, Result};
use crate::nn::{Activation, Mlp, MlpSpec, OptState, OptimizerKind};
use crate::stats::RewardNormalizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub ensemble_size: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub normalize: bool,
}

impl DisagreementConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            ensemble_size: 5,
            feature_dim: 32,
            hidden: vec![64],
            lr: 1e-3,
            optimizer: OptimizerKind::adam(),
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub model: Mlp,
    opt: OptState,
}

/// Mean over feature dimensions of the population variance across
/// ensemble predictions.
pub fn ensemble_variance(predictions: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() < 2 {
        return Err(Error::contract("ensemble variance needs at least two members"));
    }
    let d = predictions[0].len();
    for p in predictions {
        ensure_len("ensemble prediction", d, p.len())?;
    }
    if d == 0 {
        return Ok(0.0);
    }
    let k = predictions.len() as f64;
    let mut total = 0.0;
    for j in 0..d {
        let mean = predictions.iter().map(|p| p[j]).sum::<f64>() / k;
        total += predictions.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / k;
    }
    Ok(total / d as f64)
}

/// Ensemble of forward models over fixed random features; reward is their
/// disagreement about the next feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub n_actions: usize,
    pub encoder: Mlp,
    pub ensemble: Vec<Member>,
    pub lr: f64,
    rng: ChaCha8Rng,
    pub normalizer: RewardNormalizer,
}

impl Disagreement {
    pub fn new(cfg: &DisagreementConfig, seed: u64) -> Result<Self> {
        if cfg.ensemble_size < 2 {
            return Err(Error::contract(format!(
                "ensemble size {} < 2",
                cfg.ensemble_size
            )));
        }
        let act = Activation::Relu;
        let encoder = Mlp::new(
            MlpSpec::new(cfg.obs_dim, cfg.hidden.clone(), cfg.feature_dim, act)?,
            seed,
        )?;
        let spec = MlpSpec::new(
            cfg.feature_dim + cfg.n_actions,
            cfg.hidden.clone(),
            cfg.feature_dim,
            act,
        )?;
        let ensemble = (0..cfg.ensemble_size)
            .map(|k| {
                let model = Mlp::new(spec.clone(), seed.wrapping_add(1 + k as u64))?;
                let opt = OptState::new(cfg.optimizer, &model.params);
                Ok(Member { model, opt })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_actions: cfg.n_actions,
            encoder,
            ensemble,
            lr: cfg.lr,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000)),
            normalizer: RewardNormalizer::new(cfg.normalize),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.spec.input_dim
    }

    pub fn predictions(&self, s: &[f64], action: usize) -> Result<Vec<Vec<f64>>> {
        let input = concat(&self.encoder.forward(s)?, &one_hot(action, self.n_actions)?);
        self.ensemble.iter().map(|m| m.model.forward(&input)).collect()
    }

    pub fn reward(&self, s: &[f64], action: usize) -> Result<f64> {
        ensemble_variance(&self.predictions(s, action)?)
    }

    /// One step per member, each on its own bootstrap resample of the batch.
    /// Returns the mean member loss before the step.
    pub fn update(
        &mut self,
        obs: &[Vec<f64>],
        actions: &[usize],
        next_obs: &[Vec<f64>],
    ) -> Result<f64> {
        if obs.is_empty() {
            return Err(Error::contract("disagreement update needs a non-empty batch"));
        }
        ensure_len("disagreement actions", obs.len(), actions.len())?;
        ensure_len("disagreement next observations", obs.len(), next_obs.len())?;
        let inputs = obs
            .iter()
            .zip(actions)
            .map(|(s, &a)| Ok(concat(&self.encoder.forward(s)?, &one_hot(a, self.n_actions)?)))
            .collect::<Result<Vec<_>>>()?;
        let targets = next_obs
            .iter()
            .map(|s| self.encoder.forward(s))
            .collect::<Result<Vec<_>>>()?;
        let n = obs.len();
        let mut total = 0.0;
        for member in &mut self.ensemble {
            let sample: Vec<usize> = (0..n).map(|_| self.rng.gen_range(0..n)).collect();
            let mut grad = member.model.zero_grad();
            let mut loss = 0.0;
            for &i in &sample {
                let trace = member.model.trace(&inputs[i])?;
                let diff: Vec<f64> = trace
                    .output()
                    .iter()
                    .zip(&targets[i])
                    .map(|(p, t)| p - t)
                    .collect();
                loss += diff.iter().map(|d| d * d).sum::<f64>();
                let up: Vec<f64> = diff.iter().map(|d| 2.0 * d / n as f64).collect();
                member.model.accumulate(&trace, &up, &mut grad, false)?;
            }
            member.opt.apply(&mut member.model.params, &grad, self.lr)?;
            total += loss / n as f64;
        }
        Ok(total / self.ensemble.len() as f64)
    }
}
