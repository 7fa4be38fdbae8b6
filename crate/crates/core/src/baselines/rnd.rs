use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{squared_distance, Mlp, MlpSpec, OptState, OptimizerKind};
use crate::stats::RewardNormalizer;

/// Random network distillation: a predictor chases a frozen random target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rnd {
    target: Mlp,
    pub predictor: Mlp,
    opt: OptState,
    pub lr: f64,
    pub normalizer: RewardNormalizer,
}

impl Rnd {
    pub fn new(
        spec: MlpSpec,
        lr: f64,
        optimizer: OptimizerKind,
        normalize: bool,
        target_seed: u64,
        predictor_seed: u64,
    ) -> Result<Self> {
        let target = Mlp::new(spec.clone(), target_seed)?;
        let predictor = Mlp::new(spec, predictor_seed)?;
        let opt = OptState::new(optimizer, &predictor.params);
        Ok(Self {
            target,
            predictor,
            opt,
            lr,
            normalizer: RewardNormalizer::new(normalize),
        })
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn input_dim(&self) -> usize {
        self.target.spec.input_dim
    }

    pub fn reward(&self, s: &[f64]) -> Result<f64> {
        squared_distance(&self.predictor.forward(s)?, &self.target.forward(s)?)
    }

    /// One step on the mean distillation error. Returns the loss before the step.
    pub fn update(&mut self, batch: &[Vec<f64>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::contract("RND update needs a non-empty batch"));
        }
        let n = batch.len() as f64;
        let mut grad = self.predictor.zero_grad();
        let mut loss = 0.0;
        for s in batch {
            let target = self.target.forward(s)?;
            let trace = self.predictor.trace(s)?;
            let diff: Vec<f64> = trace.output().iter().zip(&target).map(|(p, t)| p - t).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>();
            let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * d / n).collect();
            self.predictor.accumulate(&trace, &upstream, &mut grad, false)?;
        }
        self.opt.apply(&mut self.predictor.params, &grad, self.lr)?;
        Ok(loss / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn rnd() -> Rnd {
        let spec = MlpSpec::new(5, vec![16, 16], 4, Activation::Relu).unwrap();
        Rnd::new(spec, 1e-3, OptimizerKind::adam(), true, 1, 2).unwrap()
    }

    #[test]
    fn copied_predictor_gives_zero() {
        let mut r = rnd();
        r.predictor = r.target.clone();
        assert_eq!(r.reward(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn zero_networks_give_zero() {
        let mut r = rnd();
        r.predictor.params.fill(0.0);
        r.target.params.fill(0.0);
        assert_eq!(r.reward(&[1.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_checked() {
        assert!(rnd().reward(&[1.0; 3]).is_err());
    }

    #[test]
    fn fixed_state_fades_and_target_is_frozen() {
        let mut r = rnd();
        let s = vec![0.3, -0.2, 0.9, 0.0, 1.0];
        let checksum = r.target.params.checksum();
        let r0 = r.reward(&s).unwrap();
        for _ in 0..500 {
            r.update(std::slice::from_ref(&s)).unwrap();
            assert_eq!(r.target.params.checksum(), checksum);
        }
        assert!(r.reward(&s).unwrap() <= 0.1 * r0);
    }
}
