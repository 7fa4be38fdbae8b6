//! The training loop.
//!
//! Each iteration collects a rollout, scores every transition with the
//! curiosity module, trains the module (learner step, then memory
//! consolidation, per minibatch) and finally updates the policy with PPO.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig, SeedPlan};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::module::{CuriosityModule, ModuleKind, ModuleLosses};
use crate::ppo::{ppo_update, PolicyState, PpoBatch, PpoConfig, RolloutBuffer, Transition};
use crate::stats::mean_std;

/// Points in an iteration at which observers are notified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopEvent {
    RolloutCollected,
    RewardsComputed,
    LearnerUpdate,
    MemoryUpdate,
    PolicyUpdate,
}

pub trait LoopObserver {
    fn on_event(&mut self, iteration: usize, event: LoopEvent);
}

impl LoopObserver for () {
    fn on_event(&mut self, _: usize, _: LoopEvent) {}
}

impl LoopObserver for Vec<(usize, LoopEvent)> {
    fn on_event(&mut self, iteration: usize, event: LoopEvent) {
        self.push((iteration, event));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Joint,
    Pretrain,
    Finetune,
}

/// One line of the per-run metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Env steps taken so far, including this iteration.
    pub step: usize,
    pub phase: Phase,
    pub episodes: usize,
    /// Undefined when no episode ended during the iteration.
    pub episode_return_mean: Option<f64>,
    pub episode_length_mean: Option<f64>,
    /// Mean fraction of the state space visited within one episode.
    pub episode_coverage_mean: Option<f64>,
    /// Fraction of the state space visited since the start of the run.
    pub cumulative_coverage: f64,
    pub intrinsic_raw_mean: f64,
    pub intrinsic_raw_std: f64,
    pub intrinsic_norm_mean: f64,
    pub intrinsic_norm_std: f64,
    pub module_loss: Option<f64>,
    pub module_loss_secondary: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Seconds since the run started. Not reproducible; excluded from
    /// determinism comparisons.
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Step count at which the episode ended.
    pub end_step: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub length: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<IterationRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

impl MetricsLog {
    /// Mean per-episode coverage over episodes ending in the last `window`
    /// fraction of `total_steps`.
    pub fn final_coverage(&self, total_steps: usize, window: f64) -> Option<f64> {
        let from = total_steps as f64 * (1.0 - window);
        let tail: Vec<f64> = self
            .episodes
            .iter()
            .filter(|e| e.end_step as f64 > from)
            .map(|e| e.coverage)
            .collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Mean extrinsic return over the same window.
    pub fn final_return(&self, total_steps: usize, window: f64) -> Option<f64> {
        let from = total_steps as f64 * (1.0 - window);
        let tail: Vec<f64> = self
            .episodes
            .iter()
            .filter(|e| e.end_step as f64 > from)
            .map(|e| e.ret)
            .collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn cumulative_coverage(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_coverage)
    }

    /// Copy with wall-clock readings zeroed.
    pub fn without_wall_clock(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.wall_clock = 0.0);
        out
    }
}

/// Everything needed to inspect or resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub step: usize,
    pub iteration: usize,
    pub policy: PolicyState,
    pub module: CuriosityModule,
    pub env: Env,
    pub obs: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub checkpoint: Checkpoint,
    /// State at the switch from pretraining to finetuning.
    pub pretrain_checkpoint: Option<Checkpoint>,
}

struct PhaseSpan {
    phase: Phase,
    end: usize,
    ppo: PpoConfig,
}

pub struct Trainer {
    cfg: RunConfig,
    seed: u64,
    phases: Vec<PhaseSpan>,
    env: Env,
    obs: Vec<f64>,
    policy: PolicyState,
    module: CuriosityModule,
    rng: ChaCha8Rng,
    step: usize,
    iteration: usize,
    ep_return: f64,
    ep_len: usize,
    ep_states: BTreeSet<usize>,
    all_states: BTreeSet<usize>,
    log: MetricsLog,
    last_good: Checkpoint,
    pretrain_checkpoint: Option<Checkpoint>,
    started: Instant,
}

impl Trainer {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let plan = SeedPlan::from_run_seed(seed);
        let mut env = cfg.env.build(plan.env)?;
        let obs = env.reset(plan.env);
        let module = cfg
            .curiosity
            .build(env.obs_dim(), env.n_actions(), plan.dymecu(), plan.module)?;
        let policy = PolicyState::new(env.obs_dim(), env.n_actions(), &cfg.ppo.hidden, plan.policy)?;
        let phases = match cfg.mode {
            Mode::Joint => vec![PhaseSpan {
                phase: Phase::Joint,
                end: cfg.total_steps,
                ppo: cfg.ppo.clone(),
            }],
            Mode::PretrainThenFinetune => vec![
                PhaseSpan {
                    phase: Phase::Pretrain,
                    end: cfg.pretrain_steps,
                    ppo: PpoConfig {
                        beta: 0.0,
                        ..cfg.ppo.clone()
                    },
                },
                PhaseSpan {
                    phase: Phase::Finetune,
                    end: cfg.total_steps,
                    ppo: PpoConfig {
                        zeta: 0.0,
                        ..cfg.ppo.clone()
                    },
                },
            ],
        };
        let start_state = env.state_id();
        let rng = ChaCha8Rng::seed_from_u64(plan.sampling);
        let last_good = Checkpoint {
            config: cfg.clone(),
            seed,
            step: 0,
            iteration: 0,
            policy: policy.clone(),
            module: module.clone(),
            env: env.clone(),
            obs: obs.clone(),
            rng: rng.clone(),
        };
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            phases,
            env,
            obs,
            policy,
            module,
            rng,
            step: 0,
            iteration: 0,
            ep_return: 0.0,
            ep_len: 0,
            ep_states: BTreeSet::from([start_state]),
            all_states: BTreeSet::from([start_state]),
            log: MetricsLog::default(),
            last_good,
            pretrain_checkpoint: None,
            started: Instant::now(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.total_steps
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut PolicyState {
        &mut self.policy
    }

    pub fn module(&self) -> &CuriosityModule {
        &self.module
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            seed: self.seed,
            step: self.step,
            iteration: self.iteration,
            policy: self.policy.clone(),
            module: self.module.clone(),
            env: self.env.clone(),
            obs: self.obs.clone(),
            rng: self.rng.clone(),
        }
    }

    /// Run one iteration. Non-finite values abort with the state as it was
    /// after the last successful iteration.
    pub fn run_iteration(&mut self, observer: &mut dyn LoopObserver) -> Result<&IterationRecord> {
        if self.is_done() {
            return Err(Error::contract("run already finished"));
        }
        let outcome = self.iterate(observer).and_then(|record| {
            if self.policy.is_finite() && self.module.is_finite() {
                Ok(record)
            } else {
                Err(Error::NonFinite("network parameters".into()))
            }
        });
        match outcome {
            Ok(record) => {
                self.log.records.push(record);
                self.last_good = self.checkpoint();
                if self.pretrain_checkpoint.is_none()
                    && self.cfg.mode == Mode::PretrainThenFinetune
                    && self.step == self.cfg.pretrain_steps
                {
                    self.pretrain_checkpoint = Some(self.last_good.clone());
                }
                Ok(self.log.records.last().expect("record just pushed"))
            }
            Err(Error::NonFinite(reason)) => Err(Error::Diverged {
                step: self.step,
                reason,
                checkpoint: Box::new(self.last_good.clone()),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            checkpoint: self.last_good,
            log: self.log,
            pretrain_checkpoint: self.pretrain_checkpoint,
        }
    }

    fn iterate(&mut self, observer: &mut dyn LoopObserver) -> Result<IterationRecord> {
        let it = self.iteration;
        let span = self
            .phases
            .iter()
            .find(|p| self.step < p.end)
            .expect("an unfinished run has a current phase");
        let (phase, phase_end, ppo_cfg) = (span.phase, span.end, span.ppo.clone());
        if phase == Phase::Finetune && self.step == self.cfg.pretrain_steps {
            self.end_episode(false);
        }
        let n = ppo_cfg
            .rollout_len(self.cfg.env.kind)
            .min(phase_end - self.step);

        let episodes_before = self.log.episodes.len();
        let mut buffer = self.collect(n)?;
        observer.on_event(it, LoopEvent::RolloutCollected);

        let curious = ppo_cfg.zeta > 0.0 && !matches!(self.module, CuriosityModule::None);
        let raw = if curious {
            let obs: Vec<Vec<f64>> = buffer.transitions.iter().map(|t| t.obs.clone()).collect();
            let acts: Vec<usize> = buffer.transitions.iter().map(|t| t.action).collect();
            let next: Vec<Vec<f64>> = buffer.transitions.iter().map(|t| t.next_obs.clone()).collect();
            self.module.raw_rewards(&obs, &acts, &next)?
        } else {
            vec![0.0; buffer.len()]
        };
        if let Some(bad) = raw.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("intrinsic reward {bad}")));
        }
        let normalized = match self.module.normalizer_mut() {
            Some(norm) if curious => norm.normalize_batch(&raw),
            _ => raw.clone(),
        };
        for ((t, r), z) in buffer.transitions.iter_mut().zip(&raw).zip(&normalized) {
            t.r_int_raw = *r;
            t.r_int = *z;
        }
        observer.on_event(it, LoopEvent::RewardsComputed);

        let losses = if curious {
            Some(self.train_module(&buffer, observer)?)
        } else {
            None
        };

        let batch = PpoBatch::from_buffer(&buffer, &ppo_cfg)?;
        let stats = ppo_update(&mut self.policy, &batch, &ppo_cfg, &mut self.rng)?;
        observer.on_event(it, LoopEvent::PolicyUpdate);
        buffer.clear();

        let new_eps = &self.log.episodes[episodes_before..];
        let mean_of = |f: &dyn Fn(&EpisodeRecord) -> f64| {
            (!new_eps.is_empty()).then(|| new_eps.iter().map(f).sum::<f64>() / new_eps.len() as f64)
        };
        let (raw_mean, raw_std) = mean_std(&raw);
        let (norm_mean, norm_std) = mean_std(&normalized);
        self.iteration += 1;
        Ok(IterationRecord {
            iteration: it,
            step: self.step,
            phase,
            episodes: new_eps.len(),
            episode_return_mean: mean_of(&|e| e.ret),
            episode_length_mean: mean_of(&|e| e.length as f64),
            episode_coverage_mean: mean_of(&|e| e.coverage),
            cumulative_coverage: self.env.coverage(&self.all_states),
            intrinsic_raw_mean: raw_mean,
            intrinsic_raw_std: raw_std,
            intrinsic_norm_mean: norm_mean,
            intrinsic_norm_std: norm_std,
            module_loss: losses.map(|l| l.primary),
            module_loss_secondary: losses.and_then(|l| l.secondary),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            wall_clock: self.started.elapsed().as_secs_f64(),
        })
    }

    fn collect(&mut self, n: usize) -> Result<RolloutBuffer> {
        let mut buffer = RolloutBuffer::new(n);
        for _ in 0..n {
            let (action, log_prob, value) = self.policy.act(&self.obs, &mut self.rng)?;
            let out = self.env.step(action)?;
            self.step += 1;
            self.ep_return += out.reward;
            self.ep_len += 1;
            let state = self.env.state_id();
            self.ep_states.insert(state);
            self.all_states.insert(state);
            buffer.push(Transition {
                obs: std::mem::take(&mut self.obs),
                action,
                log_prob,
                value,
                r_ext: out.reward,
                r_int_raw: 0.0,
                r_int: 0.0,
                done: out.done,
                next_obs: out.obs.clone(),
            });
            if out.done {
                self.end_episode(true);
            } else {
                self.obs = out.obs;
            }
        }
        let last_done = buffer.transitions.last().is_some_and(|t| t.done);
        buffer.last_value = if last_done {
            0.0
        } else {
            self.policy.value_of(&self.obs)?
        };
        Ok(buffer)
    }

    /// Close the running episode and restart the env. Truncated episodes
    /// (phase switches) are not recorded.
    fn end_episode(&mut self, record: bool) {
        if record {
            self.log.episodes.push(EpisodeRecord {
                end_step: self.step,
                ret: self.ep_return,
                length: self.ep_len,
                coverage: self.env.coverage(&self.ep_states),
            });
        }
        self.obs = self.env.restart();
        self.ep_return = 0.0;
        self.ep_len = 0;
        self.ep_states = BTreeSet::from([self.env.state_id()]);
    }

    fn train_module(
        &mut self,
        buffer: &RolloutBuffer,
        observer: &mut dyn LoopObserver,
    ) -> Result<ModuleLosses> {
        let it = self.iteration;
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut primary = 0.0;
        let mut secondary: Option<f64> = None;
        let mut count = 0usize;
        for _ in 0..self.cfg.curiosity.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.curiosity.minibatch) {
                let pick = |f: &dyn Fn(&Transition) -> Vec<f64>| -> Vec<Vec<f64>> {
                    chunk.iter().map(|&i| f(&buffer.transitions[i])).collect()
                };
                let obs = pick(&|t| t.obs.clone());
                let next = pick(&|t| t.next_obs.clone());
                let acts: Vec<usize> = chunk.iter().map(|&i| buffer.transitions[i].action).collect();
                let l = self.module.train_step(&obs, &acts, &next)?;
                observer.on_event(it, LoopEvent::LearnerUpdate);
                if self.module.consolidate()? {
                    observer.on_event(it, LoopEvent::MemoryUpdate);
                }
                primary += l.primary;
                if let Some(s) = l.secondary {
                    *secondary.get_or_insert(0.0) += s;
                }
                count += 1;
            }
        }
        let k = count.max(1) as f64;
        Ok(ModuleLosses {
            primary: primary / k,
            secondary: secondary.map(|s| s / k),
        })
    }
}

/// Train one seed to completion.
pub fn train_loop(cfg: &RunConfig, seed: u64, observer: &mut dyn LoopObserver) -> Result<RunOutput> {
    let mut trainer = Trainer::new(cfg, seed)?;
    while !trainer.is_done() {
        trainer.run_iteration(observer)?;
    }
    Ok(trainer.finish())
}

/// Whether a module kind produces an intrinsic signal.
pub fn is_curious(kind: ModuleKind) -> bool {
    kind != ModuleKind::None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvConfig;

    fn small(module: ModuleKind, total: usize) -> RunConfig {
        let mut cfg = RunConfig::new("t", EnvConfig::grid(5, 5, 30), module);
        cfg.total_steps = total;
        cfg.ppo.rollout_steps = Some(128);
        cfg.ppo.hidden = vec![16];
        cfg.curiosity.hidden = vec![16];
        cfg.curiosity.latent_dim = 8;
        cfg.curiosity.minibatch = 64;
        cfg
    }

    #[test]
    fn step_order_per_iteration() {
        let mut events = Vec::new();
        train_loop(&small(ModuleKind::Dymecu, 256), 0, &mut events).unwrap();
        for it in 0..2 {
            let seq: Vec<LoopEvent> = events.iter().filter(|e| e.0 == it).map(|e| e.1).collect();
            assert_eq!(seq[0], LoopEvent::RolloutCollected);
            assert_eq!(seq[1], LoopEvent::RewardsComputed);
            assert_eq!(*seq.last().unwrap(), LoopEvent::PolicyUpdate);
            let middle = &seq[2..seq.len() - 1];
            // 128 samples / 64 per minibatch * 2 epochs
            assert_eq!(middle.len(), 8);
            for pair in middle.chunks(2) {
                assert_eq!(pair, [LoopEvent::LearnerUpdate, LoopEvent::MemoryUpdate]);
            }
        }
    }

    #[test]
    fn baselines_have_no_memory_event() {
        let mut events = Vec::new();
        train_loop(&small(ModuleKind::Rnd, 128), 0, &mut events).unwrap();
        assert!(events.iter().all(|e| e.1 != LoopEvent::MemoryUpdate));
        assert!(events.iter().any(|e| e.1 == LoopEvent::LearnerUpdate));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = small(ModuleKind::Dymecu, 384);
        let a = train_loop(&cfg, 7, &mut ()).unwrap();
        let b = train_loop(&cfg, 7, &mut ()).unwrap();
        assert_eq!(a.log.without_wall_clock(), b.log.without_wall_clock());
        assert_eq!(a.checkpoint, b.checkpoint);
        let c = train_loop(&cfg, 8, &mut ()).unwrap();
        assert_ne!(a.log.without_wall_clock(), c.log.without_wall_clock());
    }

    #[test]
    fn no_module_and_no_zeta_is_inert() {
        let mut cfg = small(ModuleKind::None, 512);
        cfg.ppo.zeta = 0.0;
        let out = train_loop(&cfg, 1, &mut ()).unwrap();
        for r in &out.log.records {
            assert_eq!(r.intrinsic_raw_mean, 0.0);
            assert_eq!(r.intrinsic_norm_mean, 0.0);
            assert_eq!(r.intrinsic_raw_std, 0.0);
            assert!(r.module_loss.is_none());
        }
    }

    #[test]
    fn steps_monotone_and_sum_to_total() {
        let mut cfg = small(ModuleKind::Icm, 300);
        cfg.ppo.rollout_steps = Some(128);
        let out = train_loop(&cfg, 2, &mut ()).unwrap();
        let steps: Vec<usize> = out.log.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![128, 256, 300]);
        assert!(out.log.records.iter().all(|r| r.module_loss_secondary.is_some()));
    }

    #[test]
    fn tiny_grid_is_solved() {
        // Two steps allowed: return 1 only on a shortest path.
        let mut cfg = RunConfig::new("sanity", EnvConfig::grid(2, 2, 2), ModuleKind::None);
        cfg.ppo.rollout_steps = Some(64);
        cfg.ppo.lr = 3e-3;
        cfg.ppo.hidden = vec![16];
        cfg.total_steps = 64 * 200;
        let out = train_loop(&cfg, 0, &mut ()).unwrap();
        let best = out
            .log
            .records
            .iter()
            .position(|r| r.episode_return_mean == Some(1.0));
        assert!(best.is_some(), "never solved");
        assert!(out.log.final_return(cfg.total_steps, 0.1).unwrap() > 0.9);
    }

    #[test]
    fn pretrain_then_finetune_switches_coefficients() {
        let mut cfg = small(ModuleKind::Dymecu, 512);
        cfg.mode = Mode::PretrainThenFinetune;
        cfg.pretrain_steps = 256;
        let mut trainer = Trainer::new(&cfg, 0).unwrap();
        let mut phases = Vec::new();
        while !trainer.is_done() {
            let r = trainer.run_iteration(&mut ()).unwrap();
            phases.push((r.phase, r.intrinsic_raw_mean));
        }
        assert_eq!(phases.len(), 4);
        assert!(phases[..2].iter().all(|(p, r)| *p == Phase::Pretrain && *r > 0.0));
        assert!(phases[2..].iter().all(|(p, r)| *p == Phase::Finetune && *r == 0.0));
        let out = trainer.finish();
        let pre = out.pretrain_checkpoint.expect("phase switch checkpoint");
        assert_eq!(pre.step, 256);
        // the memory carried into finetuning is the pretrained one
        assert_eq!(pre.module, out.checkpoint.module);
    }

    #[test]
    fn divergence_returns_last_finite_state() {
        let cfg = small(ModuleKind::Dymecu, 512);
        let mut trainer = Trainer::new(&cfg, 0).unwrap();
        trainer.run_iteration(&mut ()).unwrap();
        let good = trainer.checkpoint();
        trainer.policy_mut().policy.params.values_mut()[0] = f64::NAN;
        match trainer.run_iteration(&mut ()) {
            Err(Error::Diverged { checkpoint, .. }) => {
                assert_eq!(*checkpoint, good);
                assert!(checkpoint.policy.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let out = train_loop(&small(ModuleKind::Dymecu, 128), 3, &mut ()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        out.checkpoint.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), out.checkpoint);
    }

    #[test]
    fn every_module_trains() {
        for kind in [
            ModuleKind::Dymecu,
            ModuleKind::DymecuOneLearner,
            ModuleKind::DymecuPredictorHeads,
            ModuleKind::Rnd,
            ModuleKind::Icm,
            ModuleKind::Disagreement,
            ModuleKind::None,
        ] {
            let out = train_loop(&small(kind, 256), 0, &mut ()).unwrap();
            assert_eq!(out.log.records.len(), 2, "{kind}");
            assert_eq!(is_curious(kind), out.log.records[0].intrinsic_raw_mean > 0.0, "{kind}");
        }
    }
}
