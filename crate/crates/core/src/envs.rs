//! Sparse-reward toy environments with vector observations.
//!
//! Both environments pay extrinsic reward `+1` only on the step that reaches
//! the goal, so every episode returns either 0 or 1.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Grid,
    Chain,
}

/// Everything needed to build an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Grid width in cells.
    #[serde(default = "default_side")]
    pub width: usize,
    /// Grid height in cells.
    #[serde(default = "default_side")]
    pub height: usize,
    /// Append a one-hot cell index to the grid's normalized coordinates.
    #[serde(default = "default_true")]
    pub one_hot: bool,
    /// Number of states in the chain.
    #[serde(default = "default_chain_len")]
    pub chain_len: usize,
    /// Probability that a chain action is flipped.
    #[serde(default)]
    pub slip: f64,
    /// Episode length cap in env steps.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_side() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_chain_len() -> usize {
    10
}
fn default_max_steps() -> usize {
    200
}

impl EnvConfig {
    pub fn grid(width: usize, height: usize, max_steps: usize) -> Self {
        Self {
            kind: EnvKind::Grid,
            width,
            height,
            one_hot: true,
            chain_len: default_chain_len(),
            slip: 0.0,
            max_steps,
        }
    }

    pub fn chain(n: usize, slip: f64, max_steps: usize) -> Self {
        Self {
            kind: EnvKind::Chain,
            width: default_side(),
            height: default_side(),
            one_hot: true,
            chain_len: n,
            slip,
            max_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("env.max_steps must be positive".into()));
        }
        match self.kind {
            EnvKind::Grid if self.width == 0 || self.height == 0 => {
                Err(Error::Config("env.width and env.height must be positive".into()))
            }
            EnvKind::Grid if self.width * self.height < 2 => {
                Err(Error::Config("env.width: grid needs at least two cells".into()))
            }
            EnvKind::Chain if self.chain_len < 2 => {
                Err(Error::Config("env.chain_len must be at least 2".into()))
            }
            EnvKind::Chain if !(0.0..=1.0).contains(&self.slip) => {
                Err(Error::Config("env.slip must lie in [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Env> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::Grid => Env::Grid(GridWorld::new(
                self.width,
                self.height,
                self.max_steps,
                self.one_hot,
            )),
            EnvKind::Chain => {
                Env::Chain(ChainMdp::new(self.chain_len, self.slip, self.max_steps, seed))
            }
        })
    }
}

/// Grid with the agent starting in the corner `(0, 0)` and the goal in the
/// opposite corner. Actions: 0 up, 1 down, 2 left, 3 right; walls clip moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub agent: (usize, usize),
    pub goal: (usize, usize),
    pub max_steps: usize,
    pub step_count: usize,
    pub one_hot: bool,
}

impl GridWorld {
    pub fn new(width: usize, height: usize, max_steps: usize, one_hot: bool) -> Self {
        Self {
            width,
            height,
            agent: (0, 0),
            goal: (width - 1, height - 1),
            max_steps,
            step_count: 0,
            one_hot,
        }
    }

    fn observation(&self) -> Vec<f64> {
        let (x, y) = self.agent;
        let mut obs = vec![x as f64 / self.width as f64, y as f64 / self.height as f64];
        if self.one_hot {
            let mut hot = vec![0.0; self.width * self.height];
            hot[self.state_id()] = 1.0;
            obs.extend(hot);
        }
        obs
    }

    pub fn state_id(&self) -> usize {
        self.agent.1 * self.width + self.agent.0
    }
}

/// Line of `n` states; action 0 moves left, 1 moves right. With probability
/// `slip` the chosen direction is reversed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMdp {
    pub n: usize,
    pub position: usize,
    pub slip: f64,
    pub max_steps: usize,
    pub step_count: usize,
    rng: ChaCha8Rng,
}

impl ChainMdp {
    pub fn new(n: usize, slip: f64, max_steps: usize, seed: u64) -> Self {
        Self {
            n,
            position: 0,
            slip,
            max_steps,
            step_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.n];
        obs[self.position] = 1.0;
        obs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Env {
    Grid(GridWorld),
    Chain(ChainMdp),
}

impl Env {
    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Grid(g) => 2 + if g.one_hot { g.width * g.height } else { 0 },
            Env::Chain(c) => c.n,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Env::Grid(_) => 4,
            Env::Chain(_) => 2,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Env::Grid(g) => g.width * g.height,
            Env::Chain(c) => c.n,
        }
    }

    pub fn state_id(&self) -> usize {
        match self {
            Env::Grid(g) => g.state_id(),
            Env::Chain(c) => c.position,
        }
    }

    pub fn step_count(&self) -> usize {
        match self {
            Env::Grid(g) => g.step_count,
            Env::Chain(c) => c.step_count,
        }
    }

    /// Put the agent back at the start. The seed reseeds the chain's slip noise.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::Grid(g) => {
                g.agent = (0, 0);
                g.step_count = 0;
                g.observation()
            }
            Env::Chain(c) => {
                c.position = 0;
                c.step_count = 0;
                c.rng = ChaCha8Rng::seed_from_u64(seed);
                c.observation()
            }
        }
    }

    /// Start a new episode without reseeding.
    pub fn restart(&mut self) -> Vec<f64> {
        match self {
            Env::Grid(g) => {
                g.agent = (0, 0);
                g.step_count = 0;
                g.observation()
            }
            Env::Chain(c) => {
                c.position = 0;
                c.step_count = 0;
                c.observation()
            }
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if action >= self.n_actions() {
            return Err(Error::contract(format!(
                "action {action} invalid for an environment with {} actions",
                self.n_actions()
            )));
        }
        match self {
            Env::Grid(g) => {
                let (x, y) = g.agent;
                g.agent = match action {
                    0 => (x, y.saturating_sub(1)),
                    1 => (x, (y + 1).min(g.height - 1)),
                    2 => (x.saturating_sub(1), y),
                    _ => ((x + 1).min(g.width - 1), y),
                };
                g.step_count += 1;
                let reached = g.agent == g.goal;
                Ok(StepOutcome {
                    obs: g.observation(),
                    reward: if reached { 1.0 } else { 0.0 },
                    done: reached || g.step_count >= g.max_steps,
                })
            }
            Env::Chain(c) => {
                let mut right = action == 1;
                if c.slip > 0.0 && c.rng.gen_bool(c.slip) {
                    right = !right;
                }
                c.position = if right {
                    (c.position + 1).min(c.n - 1)
                } else {
                    c.position.saturating_sub(1)
                };
                c.step_count += 1;
                let reached = c.position == c.n - 1;
                Ok(StepOutcome {
                    obs: c.observation(),
                    reward: if reached { 1.0 } else { 0.0 },
                    done: reached || c.step_count >= c.max_steps,
                })
            }
        }
    }

    /// Fraction of the state space present in `visits`.
    pub fn coverage(&self, visits: &BTreeSet<usize>) -> f64 {
        coverage(visits, self.n_states())
    }
}

pub fn coverage(visits: &BTreeSet<usize>, n_states: usize) -> f64 {
    visits.iter().filter(|&&s| s < n_states).count() as f64 / n_states as f64
}
