use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::nn::{squared_distance, Activation, Mlp, MlpSpec, OptState, OptimizerKind};
use crate::stats::RewardNormalizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Weight of the forward loss; the inverse loss gets `1 - forward_weight`.
    pub forward_weight: f64,
    pub freeze_encoder: bool,
    pub normalize: bool,
}

impl IcmConfig {
    pub fn new(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            feature_dim: 32,
            hidden: vec![64],
            lr: 1e-3,
            optimizer: OptimizerKind::adam(),
            forward_weight: 0.2,
            freeze_encoder: false,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IcmLosses {
    pub forward: f64,
    pub inverse: f64,
}

/// Intrinsic curiosity module: reward is the forward-model error in a feature
/// space shaped by an inverse-dynamics objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Icm {
    pub n_actions: usize,
    pub encoder: Mlp,
    pub forward_model: Mlp,
    pub inverse_model: Mlp,
    encoder_opt: OptState,
    forward_opt: OptState,
    inverse_opt: OptState,
    pub lr: f64,
    pub forward_weight: f64,
    pub freeze_encoder: bool,
    pub normalizer: RewardNormalizer,
}

pub(crate) fn one_hot(index: usize, n: usize) -> Result<Vec<f64>> {
    if index >= n {
        return Err(Error::contract(format!(
            "action {index} out of range for arity {n}"
        )));
    }
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    Ok(v)
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

impl Icm {
    pub fn new(cfg: &IcmConfig, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.forward_weight) {
            return Err(Error::contract("forward_weight must lie in [0, 1]"));
        }
        let f = cfg.feature_dim;
        let act = Activation::Relu;
        let encoder = Mlp::new(MlpSpec::new(cfg.obs_dim, cfg.hidden.clone(), f, act)?, seed)?;
        let forward_model = Mlp::new(
            MlpSpec::new(f + cfg.n_actions, cfg.hidden.clone(), f, act)?,
            seed.wrapping_add(1),
        )?;
        let inverse_model = Mlp::new(
            MlpSpec::new(2 * f, cfg.hidden.clone(), cfg.n_actions, act)?,
            seed.wrapping_add(2),
        )?;
        Ok(Self {
            n_actions: cfg.n_actions,
            encoder_opt: OptState::new(cfg.optimizer, &encoder.params),
            forward_opt: OptState::new(cfg.optimizer, &forward_model.params),
            inverse_opt: OptState::new(cfg.optimizer, &inverse_model.params),
            encoder,
            forward_model,
            inverse_model,
            lr: cfg.lr,
            forward_weight: cfg.forward_weight,
            freeze_encoder: cfg.freeze_encoder,
            normalizer: RewardNormalizer::new(cfg.normalize),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.spec.input_dim
    }

    pub fn predict_next_feature(&self, s: &[f64], action: usize) -> Result<Vec<f64>> {
        let phi = self.encoder.forward(s)?;
        self.forward_model
            .forward(&concat(&phi, &one_hot(action, self.n_actions)?))
    }

    /// `|forward(encode(s), a) - encode(s_next)|^2`.
    pub fn reward(&self, s: &[f64], action: usize, s_next: &[f64]) -> Result<f64> {
        let pred = self.predict_next_feature(s, action)?;
        squared_distance(&pred, &self.encoder.forward(s_next)?)
    }

    /// One joint step on `w * forward_loss + (1 - w) * inverse_cross_entropy`.
    /// The forward loss treats the next-state feature as a fixed target.
    pub fn update(
        &mut self,
        obs: &[Vec<f64>],
        actions: &[usize],
        next_obs: &[Vec<f64>],
    ) -> Result<IcmLosses> {
        if obs.is_empty() {
            return Err(Error::contract("ICM update needs a non-empty batch"));
        }
        ensure_len("ICM actions", obs.len(), actions.len())?;
        ensure_len("ICM next observations", obs.len(), next_obs.len())?;
        let n = obs.len() as f64;
        let f = self.encoder.spec.output_dim;
        let wf = self.forward_weight;
        let mut g_enc = self.encoder.zero_grad();
        let mut g_fwd = self.forward_model.zero_grad();
        let mut g_inv = self.inverse_model.zero_grad();
        let mut losses = IcmLosses::default();
        for ((s, &a), s2) in obs.iter().zip(actions).zip(next_obs) {
            let t_s = self.encoder.trace(s)?;
            let t_s2 = self.encoder.trace(s2)?;
            let phi = t_s.output();
            let phi2 = t_s2.output();

            let fwd_in = concat(phi, &one_hot(a, self.n_actions)?);
            let t_f = self.forward_model.trace(&fwd_in)?;
            let diff: Vec<f64> = t_f.output().iter().zip(phi2).map(|(p, q)| p - q).collect();
            losses.forward += diff.iter().map(|d| d * d).sum::<f64>() / n;
            let up_f: Vec<f64> = diff.iter().map(|d| wf * 2.0 * d / n).collect();
            let dx_f = self
                .forward_model
                .accumulate(&t_f, &up_f, &mut g_fwd, true)?
                .expect("input gradient requested");

            let t_i = self.inverse_model.trace(&concat(phi, phi2))?;
            let probs = softmax(t_i.output());
            losses.inverse -= probs[a].max(1e-300).ln() / n;
            let up_i: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(k, p)| (1.0 - wf) * (p - if k == a { 1.0 } else { 0.0 }) / n)
                .collect();
            let dx_i = self
                .inverse_model
                .accumulate(&t_i, &up_i, &mut g_inv, true)?
                .expect("input gradient requested");

            if !self.freeze_encoder {
                let d_phi: Vec<f64> = (0..f).map(|k| dx_f[k] + dx_i[k]).collect();
                self.encoder.accumulate(&t_s, &d_phi, &mut g_enc, false)?;
                self.encoder.accumulate(&t_s2, &dx_i[f..], &mut g_enc, false)?;
            }
        }
        self.forward_opt
            .apply(&mut self.forward_model.params, &g_fwd, self.lr)?;
        self.inverse_opt
            .apply(&mut self.inverse_model.params, &g_inv, self.lr)?;
        if !self.freeze_encoder {
            self.encoder_opt.apply(&mut self.encoder.params, &g_enc, self.lr)?;
        }
        Ok(losses)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
