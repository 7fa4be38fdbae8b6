//! Comparison curiosity modules at desk scale: random network distillation,
//! the intrinsic curiosity module, and ensemble disagreement.

mod disagreement;
mod icm;
mod rnd;

pub use disagreement::{ensemble_variance, Disagreement, DisagreementConfig, Member};
pub use icm::{Icm, IcmConfig, IcmLosses};
pub use rnd::Rnd;

pub(crate) use icm::softmax;
