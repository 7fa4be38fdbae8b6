use serde::{Deserialize, Serialize};

/// Welford running mean and variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance; zero before two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Root of the running second moment, `sqrt(var + mean^2)`.
    pub fn rms(&self) -> f64 {
        (self.variance() + self.mean * self.mean).sqrt()
    }
}

/// Mean and population standard deviation of a slice. Empty input gives zeros.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scales raw intrinsic rewards by the running root-mean-square of every raw
/// reward observed so far. Disabled normalizers pass rewards through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub enabled: bool,
    stat: RunningStat,
}

impl RewardNormalizer {
    pub const EPS: f64 = 1e-8;

    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            stat: RunningStat::new(),
        }
    }

    pub fn observe(&mut self, raw: f64) {
        self.stat.push(raw);
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        if self.enabled {
            raw / (self.stat.rms() + Self::EPS)
        } else {
            raw
        }
    }

    /// Observe every reward in the batch, then normalize each.
    pub fn normalize_batch(&mut self, raw: &[f64]) -> Vec<f64> {
        raw.iter().for_each(|r| self.observe(*r));
        raw.iter().map(|r| self.normalize(*r)).collect()
    }

    pub fn stat(&self) -> &RunningStat {
        &self.stat
    }
}
