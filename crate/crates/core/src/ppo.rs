//! Proximal policy optimization over categorical actions.
//!
//! Separate policy and value MLPs, generalized advantage estimation on a single
//! mixed reward stream `zeta * r_int + beta * r_ext`, and the clipped surrogate
//! objective with an entropy bonus.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::softmax;
use crate::envs::EnvKind;
use crate::error::{ensure_len, Error, Result};
use crate::nn::{clip_global_norm, Activation, Mlp, MlpSpec, OptState, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    /// Discount factor, in (0, 1].
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    /// GAE mixing parameter, in [0, 1].
    #[serde(default = "defaults::lambda_gae")]
    pub lambda_gae: f64,
    #[serde(default = "defaults::clip_eps")]
    pub clip_eps: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    /// Samples per gradient step.
    #[serde(default = "defaults::minibatch")]
    pub minibatch: usize,
    /// Intrinsic reward coefficient.
    #[serde(default = "defaults::zeta")]
    pub zeta: f64,
    /// Extrinsic reward coefficient.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::entropy_coef")]
    pub entropy_coef: f64,
    #[serde(default = "defaults::value_coef")]
    pub value_coef: f64,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::max_grad_norm")]
    pub max_grad_norm: f64,
    /// Env steps collected per iteration; unset means the environment's default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_steps: Option<usize>,
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
}

mod defaults {
    pub fn gamma() -> f64 {
        0.99
    }
    pub fn lambda_gae() -> f64 {
        0.95
    }
    pub fn clip_eps() -> f64 {
        0.2
    }
    pub fn epochs() -> usize {
        4
    }
    pub fn minibatch() -> usize {
        64
    }
    pub fn zeta() -> f64 {
        1.0
    }
    pub fn beta() -> f64 {
        2.0
    }
    pub fn entropy_coef() -> f64 {
        0.01
    }
    pub fn value_coef() -> f64 {
        0.5
    }
    pub fn lr() -> f64 {
        3e-4
    }
    pub fn max_grad_norm() -> f64 {
        0.5
    }
    pub fn hidden() -> Vec<usize> {
        vec![64, 64]
    }
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: defaults::gamma(),
            lambda_gae: defaults::lambda_gae(),
            clip_eps: defaults::clip_eps(),
            epochs: defaults::epochs(),
            minibatch: defaults::minibatch(),
            zeta: defaults::zeta(),
            beta: defaults::beta(),
            entropy_coef: defaults::entropy_coef(),
            value_coef: defaults::value_coef(),
            lr: defaults::lr(),
            max_grad_norm: defaults::max_grad_norm(),
            rollout_steps: None,
            hidden: defaults::hidden(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("ppo.{m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            return fail("lambda_gae must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return fail("clip_eps must be positive");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_steps == Some(0) {
            return fail("epochs, minibatch and rollout_steps must be positive");
        }
        if !(self.zeta >= 0.0 && self.beta >= 0.0) {
            return fail("zeta and beta must be >= 0");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return fail("entropy_coef and value_coef must be >= 0");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and >= 0");
        }
        if !(self.max_grad_norm > 0.0) {
            return fail("max_grad_norm must be positive");
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive");
        }
        Ok(())
    }
}

impl PpoConfig {
    /// Rollout length: 2048 steps on the grid, 128 on the chain unless set.
    pub fn rollout_len(&self, env: EnvKind) -> usize {
        self.rollout_steps.unwrap_or(match env {
            EnvKind::Grid => 2048,
            EnvKind::Chain => 128,
        })
    }
}

/// `zeta * r_int + beta * r_ext`.
pub fn total_reward(r_int: f64, r_ext: f64, cfg: &PpoConfig) -> f64 {
    cfg.zeta * r_int + cfg.beta * r_ext
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub policy: Mlp,
    pub value: Mlp,
    policy_opt: OptState,
    value_opt: OptState,
}

impl PolicyState {
    pub fn new(obs_dim: usize, n_actions: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut policy = Mlp::new(
            MlpSpec::new(obs_dim, hidden.to_vec(), n_actions, Activation::Tanh)?,
            seed,
        )?;
        // near-uniform initial policy
        let last = hidden.len();
        policy.params.scale_layer(last, 0.01);
        let value = Mlp::new(
            MlpSpec::new(obs_dim, hidden.to_vec(), 1, Activation::Tanh)?,
            seed.wrapping_add(1),
        )?;
        Ok(Self {
            policy_opt: OptState::new(OptimizerKind::adam(), &policy.params),
            value_opt: OptState::new(OptimizerKind::adam(), &value.params),
            policy,
            value,
        })
    }

    pub fn logits(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let logits = self.policy.forward(obs)?;
        check_logits(&logits)?;
        Ok(logits)
    }

    pub fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(obs)?))
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.value.forward(obs)?[0])
    }

    /// Sample an action; returns `(action, log_prob, value)`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(usize, f64, f64)> {
        let probs = self.action_probs(obs)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut action = probs.len() - 1;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                action = k;
                break;
            }
        }
        Ok((action, probs[action].ln(), self.value_of(obs)?))
    }

    pub fn is_finite(&self) -> bool {
        self.policy.params.is_finite() && self.value.params.is_finite()
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.iter().all(|l| l.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("policy logits {logits:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub r_ext: f64,
    pub r_int_raw: f64,
    pub r_int: f64,
    pub done: bool,
    pub next_obs: Vec<f64>,
}

/// On-policy storage for one iteration; cleared after each policy update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub capacity: usize,
    /// Value estimate of the observation following the last transition.
    pub last_value: f64,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            transitions: Vec::with_capacity(capacity),
            capacity,
            last_value: 0.0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.last_value = 0.0;
    }

    pub fn total_rewards(&self, cfg: &PpoConfig) -> Vec<f64> {
        self.transitions
            .iter()
            .map(|t| total_reward(t.r_int, t.r_ext, cfg))
            .collect()
    }

    /// Advantages and returns of the mixed reward stream.
    pub fn gae(&self, cfg: &PpoConfig) -> Result<(Vec<f64>, Vec<f64>)> {
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        compute_gae(
            &self.total_rewards(cfg),
            &values,
            &dones,
            self.last_value,
            cfg.gamma,
            cfg.lambda_gae,
        )
    }
}

/// Generalized advantage estimation. `dones[t]` marks that the episode ended
/// after step `t`; `last_value` bootstraps the step after the buffer.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::contract("GAE needs a non-empty buffer"));
    }
    ensure_len("GAE values", rewards.len(), values.len())?;
    ensure_len("GAE done flags", rewards.len(), dones.len())?;
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (last_value, 1.0)
        } else {
            (values[t + 1], 1.0)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * carry * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shift and scale to mean 0, standard deviation 1.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

/// Clipped surrogate loss `-min(r A, clip(r, 1-eps, 1+eps) A)` of one sample
/// and its gradient with respect to the logits.
pub fn surrogate_logit_grad(
    logits: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    clip_eps: f64,
) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let ratio = (probs[action].ln() - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    let (loss, dlogp) = if unclipped <= clipped {
        (-unclipped, -unclipped)
    } else {
        (-clipped, 0.0)
    };
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, p)| dlogp * (if j == action { 1.0 } else { 0.0 } - p))
        .collect();
    (loss, grad)
}

/// Entropy of the softmax distribution and the gradient of `-entropy`.
pub fn neg_entropy_logit_grad(logits: &[f64]) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let h: f64 = -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let grad = probs
        .iter()
        .map(|p| if *p > 0.0 { p * (p.ln() + h) } else { 0.0 })
        .collect();
    (h, grad)
}

/// Inputs of one PPO update, already flattened out of the rollout buffer.
#[derive(Debug, Clone, Default)]
pub struct PpoBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    /// Build from a buffer: GAE on the mixed reward, advantages normalized.
    pub fn from_buffer(buffer: &RolloutBuffer, cfg: &PpoConfig) -> Result<Self> {
        let (mut advantages, returns) = buffer.gae(cfg)?;
        normalize_advantages(&mut advantages);
        Ok(Self {
            obs: buffer.transitions.iter().map(|t| t.obs.clone()).collect(),
            actions: buffer.transitions.iter().map(|t| t.action).collect(),
            old_log_probs: buffer.transitions.iter().map(|t| t.log_prob).collect(),
            advantages,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Epochs of shuffled minibatch steps on the clipped surrogate, the value
/// regression and the entropy bonus. Stats are averaged over all minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    state: &mut PolicyState,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::contract("PPO update needs a non-empty batch"));
    }
    ensure_len("PPO actions", n, batch.actions.len())?;
    ensure_len("PPO log-probs", n, batch.old_log_probs.len())?;
    ensure_len("PPO advantages", n, batch.advantages.len())?;
    ensure_len("PPO returns", n, batch.returns.len())?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let m = chunk.len() as f64;
            let mut g_pi = state.policy.zero_grad();
            let mut g_v = state.value.zero_grad();
            let mut clipped = 0usize;
            for &i in chunk {
                let obs = &batch.obs[i];
                let trace = state.policy.trace(obs)?;
                check_logits(trace.output())?;
                let (surr, mut up) = surrogate_logit_grad(
                    trace.output(),
                    batch.actions[i],
                    batch.old_log_probs[i],
                    batch.advantages[i],
                    cfg.clip_eps,
                );
                if up.iter().all(|u| *u == 0.0) {
                    clipped += 1;
                }
                let (h, ent_grad) = neg_entropy_logit_grad(trace.output());
                for (u, e) in up.iter_mut().zip(&ent_grad) {
                    *u = (*u + cfg.entropy_coef * e) / m;
                }
                state.policy.accumulate(&trace, &up, &mut g_pi, false)?;

                let vt = state.value.trace(obs)?;
                let err = vt.output()[0] - batch.returns[i];
                state
                    .value
                    .accumulate(&vt, &[cfg.value_coef * 2.0 * err / m], &mut g_v, false)?;

                stats.policy_loss += surr / m;
                stats.value_loss += err * err / m;
                stats.entropy += h / m;
            }
            stats.clip_fraction += clipped as f64 / m;
            clip_global_norm(&mut g_pi, cfg.max_grad_norm);
            clip_global_norm(&mut g_v, cfg.max_grad_norm);
            state.policy_opt.apply(&mut state.policy.params, &g_pi, cfg.lr)?;
            state.value_opt.apply(&mut state.value.params, &g_v, cfg.lr)?;
            steps += 1;
        }
    }
    let k = steps as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    if !state.is_finite() {
        return Err(Error::NonFinite("policy parameters after PPO update".into()));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_gae(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        last_value: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let value_at = |k: usize| if k < n { values[k] } else { last_value };
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                let mut weight = 1.0;
                for k in t..n {
                    let next = if dones[k] { 0.0 } else { value_at(k + 1) };
                    total += weight * (rewards[k] + gamma * next - values[k]);
                    if dones[k] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn mixing_examples() {
        let cfg = PpoConfig::default();
        assert_eq!(total_reward(0.5, 1.0, &cfg), 2.5);
        let ext_only = PpoConfig {
            zeta: 0.0,
            ..PpoConfig::default()
        };
        assert_eq!(total_reward(123.0, 1.0, &ext_only), 2.0);
        let int_only = PpoConfig {
            beta: 0.0,
            ..PpoConfig::default()
        };
        assert_eq!(total_reward(0.7, 1.0, &int_only), 0.7);
    }

    #[test]
    fn gae_telescopes() {
        let (adv, ret) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[false, true], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![2.0, 1.0]);
        assert_eq!(ret, vec![2.0, 1.0]);
        let (adv, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95).unwrap();
        assert!(adv.iter().all(|a| *a == 0.0));
        assert!(compute_gae(&[], &[], &[], 0.0, 0.9, 0.9).is_err());
    }

    #[test]
    fn gae_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..=32);
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
            let last = rng.gen_range(-1.0..1.0);
            let gamma = rng.gen_range(0.5..=1.0);
            let lambda = rng.gen_range(0.0..=1.0);
            let (adv, ret) = compute_gae(&r, &v, &d, last, gamma, lambda).unwrap();
            let want = brute_force_gae(&r, &v, &d, last, gamma, lambda);
            for t in 0..n {
                assert!((adv[t] - want[t]).abs() < 1e-10);
                assert!((ret[t] - (want[t] + v[t])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_ratio_gives_policy_gradient() {
        let logits = [0.3, -0.2, 0.9];
        let probs = softmax(&logits);
        let adv = -1.7;
        let (_, g) = surrogate_logit_grad(&logits, 1, probs[1].ln(), adv, 0.2);
        for j in 0..3 {
            let pg = -adv * (if j == 1 { 1.0 } else { 0.0 } - probs[j]);
            assert!((g[j] - pg).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_region_has_zero_gradient() {
        let logits = [2.0, 0.0];
        let probs = softmax(&logits);
        // ratio ~ 2, positive advantage: clipped at 1.2
        let (loss, g) = surrogate_logit_grad(&logits, 0, (probs[0] / 2.0).ln(), 1.0, 0.2);
        assert!((loss + 1.2).abs() < 1e-12);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let logits = vec![0.4, -1.1, 0.25, 0.8];
        let old = softmax(&logits)[2].ln() - 0.05;
        for adv in [1.3, -0.6] {
            let (_, g) = surrogate_logit_grad(&logits, 2, old, adv, 0.2);
            let (_, ge) = neg_entropy_logit_grad(&logits);
            for j in 0..4 {
                let f = |d: f64, which: u8| {
                    let mut l = logits.clone();
                    l[j] += d;
                    if which == 0 {
                        surrogate_logit_grad(&l, 2, old, adv, 0.2).0
                    } else {
                        -neg_entropy_logit_grad(&l).0
                    }
                };
                let fd = (f(1e-6, 0) - f(-1e-6, 0)) / 2e-6;
                assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
                let fd = (f(1e-6, 1) - f(-1e-6, 1)) / 2e-6;
                assert!((fd - ge[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_lr_leaves_policy_unchanged() {
        let mut state = PolicyState::new(3, 2, &[8], 1).unwrap();
        let before = state.clone();
        let cfg = PpoConfig {
            lr: 0.0,
            epochs: 1,
            ..PpoConfig::default()
        };
        let batch = PpoBatch {
            obs: vec![vec![1.0, 0.0, 0.5]; 4],
            actions: vec![0, 1, 0, 1],
            old_log_probs: vec![0.5f64.ln(); 4],
            advantages: vec![1.0, -1.0, 0.5, 0.2],
            returns: vec![1.0; 4],
        };
        ppo_update(&mut state, &batch, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(state.policy.params, before.policy.params);
        assert_eq!(state.value.params, before.value.params);
    }

    #[test]
    fn bandit_probability_rises_monotonically() {
        let mut state = PolicyState::new(1, 2, &[8], 3).unwrap();
        let cfg = PpoConfig {
            epochs: 1,
            minibatch: 64,
            lr: 1e-3,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let obs = vec![1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p0 = state.action_probs(&obs).unwrap()[0];
        for _ in 0..50 {
            let mut batch = PpoBatch::default();
            for _ in 0..64 {
                let (a, lp, _) = state.act(&obs, &mut rng).unwrap();
                batch.obs.push(obs.clone());
                batch.actions.push(a);
                batch.old_log_probs.push(lp);
                batch.advantages.push(if a == 0 { 1.0 } else { -1.0 });
                batch.returns.push(0.0);
            }
            ppo_update(&mut state, &batch, &cfg, &mut rng).unwrap();
            let p = state.action_probs(&obs).unwrap()[0];
            assert!(p > p0, "{p0} -> {p}");
            p0 = p;
        }
    }

    #[test]
    fn nan_logits_abort() {
        let mut state = PolicyState::new(2, 2, &[4], 0).unwrap();
        state.policy.params.values_mut()[0] = f64::NAN;
        assert!(matches!(state.action_probs(&[1.0, 1.0]), Err(Error::NonFinite(_))));
        let batch = PpoBatch {
            obs: vec![vec![1.0, 1.0]],
            actions: vec![0],
            old_log_probs: vec![-0.7],
            advantages: vec![1.0],
            returns: vec![0.0],
        };
        let r = ppo_update(&mut state, &batch, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn advantages_normalized() {
        let mut a = vec![1.0, 2.0, 3.0, 10.0];
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 4.0;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn mixing_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in -10.0f64..10.0) {
            let cfg = PpoConfig::default();
            let lhs = total_reward(a, b, &cfg) + total_reward(c, d, &cfg);
            let rhs = total_reward(a + c, b + d, &cfg);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
