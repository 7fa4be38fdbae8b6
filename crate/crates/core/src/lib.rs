//! Curiosity-driven exploration toolkit.
//!
//! The centrepiece is [`curiosity::DyMeCu`]: two online learner encoders are
//! regressed onto the output of a memory encoder whose parameters track an
//! exponential moving average of the learners. The squared gap between the
//! two learners' latents is the intrinsic reward. Baseline curiosity modules
//! (RND, ICM, ensemble disagreement), a PPO trainer, sparse-reward toy
//! environments and an experiment harness are provided alongside.

pub mod baselines;
pub mod config;
pub mod curiosity;
pub mod envs;
pub mod error;
pub mod harness;
pub mod module;
pub mod nn;
pub mod ppo;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
