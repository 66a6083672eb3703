/// Running variance of a reward stream.
/// `normalize` divides by the running std without subtracting the mean.
///
/// With `decay = 1` every sample counts equally (parallel Welford merge).
/// With `decay < 1` each new batch is mixed in with weight `1 - decay`, so
/// the statistics follow the recent reward scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
    decay: f64,
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        Self::new()
    }
}

const STD_FLOOR: f64 = 1e-8;

impl RewardNormalizer {
    pub fn new() -> Self {
        Self::with_decay(1.0)
    }

    pub fn with_decay(decay: f64) -> Self {
        assert!(decay > 0.0 && decay <= 1.0, "decay must lie in (0, 1]");
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            decay,
        }
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of the (weighted) stream.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else if self.decay < 1.0 {
            self.m2
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn update(&mut self, values: &[f32]) {
        if values.is_empty() {
            return;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let m2 = values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>();
        if self.decay < 1.0 {
            let var = m2 / n;
            if self.count == 0 {
                self.mean = mean;
                self.m2 = var;
            } else {
                let (b, w) = (self.decay, 1.0 - self.decay);
                let delta = mean - self.mean;
                self.m2 = b * self.m2 + w * var + b * w * delta * delta;
                self.mean += w * delta;
            }
            self.count += values.len() as u64;
            return;
        }
        let total = self.count as f64 + n;
        let delta = mean - self.mean;
        self.mean += delta * n / total;
        self.m2 += m2 + delta * delta * self.count as f64 * n / total;
        self.count += values.len() as u64;
    }

    /// `v / std`; identity until any data has been seen.
    pub fn normalize(&self, values: &[f32]) -> Vec<f32> {
        if self.count == 0 {
            return values.to_vec();
        }
        let s = self.std().max(STD_FLOOR);
        values.iter().map(|&v| (v as f64 / s) as f32).collect()
    }
}
