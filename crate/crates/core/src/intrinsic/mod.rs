//! Intrinsic rewards for reward-free pretraining.
//!
//! Knowledge-based modules (RND, ICM, Disagreement) reward prediction error and
//! learn their predictors from the replayed transitions. APT is data-based: it
//! rewards distance to the k nearest neighbours among the batch's next states,
//! using the raw 4-D observation as its latent space.
//!
//! All modules optionally divide rewards by a running standard deviation
//! (no mean subtraction).

mod apt;
mod nets;
mod normalizer;

pub use apt::apt_rewards;
pub use normalizer::RewardNormalizer;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Matrix, Mlp, NnError};
use nets::{Disagreement, Icm, Rnd};

#[derive(Debug, thiserror::Error)]
pub enum IntrinsicError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid intrinsic configuration: {0}")]
    Config(String),
    #[error("batch of {got} rows is too small, need more than {need}")]
    BatchTooSmall { need: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("shape: {0}")]
    Shape(String),
}

impl IntrinsicError {
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            IntrinsicError::NonFinite(_) | IntrinsicError::Nn(NnError::NonFinite { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicKind {
    Rnd,
    Icm,
    Disagreement,
    Apt,
}

impl IntrinsicKind {
    pub fn name(self) -> &'static str {
        match self {
            IntrinsicKind::Rnd => "rnd",
            IntrinsicKind::Icm => "icm",
            IntrinsicKind::Disagreement => "disagreement",
            IntrinsicKind::Apt => "apt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnd" => Some(IntrinsicKind::Rnd),
            "icm" => Some(IntrinsicKind::Icm),
            "disagreement" => Some(IntrinsicKind::Disagreement),
            "apt" => Some(IntrinsicKind::Apt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicConfig {
    pub kind: IntrinsicKind,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub rnd_rep_dim: usize,
    pub icm_embed_dim: usize,
    pub ensemble_size: usize,
    pub apt_k: usize,
    pub apt_eps: f64,
    pub normalize: bool,
    /// Per-batch forgetting factor of the reward normalizer; 1 keeps all history.
    pub normalizer_decay: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            kind: IntrinsicKind::Rnd,
            hidden: vec![128, 128],
            learning_rate: 1e-4,
            rnd_rep_dim: 64,
            icm_embed_dim: 32,
            ensemble_size: 5,
            apt_k: 12,
            apt_eps: 1e-3,
            normalize: true,
            normalizer_decay: 0.99,
        }
    }
}

impl IntrinsicConfig {
    pub fn validate(&self) -> Result<(), IntrinsicError> {
        let bad = |m: &str| Err(IntrinsicError::Config(m.into()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be non-empty and positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.rnd_rep_dim == 0 || self.icm_embed_dim == 0 {
            return bad("representation sizes must be positive");
        }
        if self.ensemble_size < 2 {
            return bad("disagreement needs at least two forward models");
        }
        if self.apt_k == 0 || !(self.apt_eps > 0.0) {
            return bad("apt needs k >= 1 and a positive distance floor");
        }
        if !(self.normalizer_decay > 0.0 && self.normalizer_decay <= 1.0) {
            return bad("normalizer decay must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Transitions `(s, a, s')`, one per row.
#[derive(Debug, Clone, Copy)]
pub struct TransitionRows<'a> {
    pub obs: &'a Matrix<f32>,
    pub action: &'a Matrix<f32>,
    pub next_obs: &'a Matrix<f32>,
}

impl TransitionRows<'_> {
    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows() == 0
    }

    fn check(&self, obs_dim: usize, act_dim: usize) -> Result<(), IntrinsicError> {
        let n = self.obs.rows();
        if n == 0 {
            return Err(IntrinsicError::Shape("empty batch".into()));
        }
        if self.action.rows() != n || self.next_obs.rows() != n {
            return Err(IntrinsicError::Shape(format!(
                "row counts {} / {} / {}",
                n,
                self.action.rows(),
                self.next_obs.rows()
            )));
        }
        if self.obs.cols() != obs_dim
            || self.next_obs.cols() != obs_dim
            || self.action.cols() != act_dim
        {
            return Err(IntrinsicError::Shape(format!(
                "columns {}/{}/{} for obs {obs_dim}, act {act_dim}",
                self.obs.cols(),
                self.action.cols(),
                self.next_obs.cols()
            )));
        }
        Ok(())
    }
}

/// Output of [`IntrinsicModule::intrinsic_reward`].
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicOutput {
    /// Rewards after normalization (equal to `raw` when normalization is off).
    pub rewards: Vec<f32>,
    pub raw: Vec<f32>,
    /// Self-supervised loss of the module's predictors on the same rows (0 for APT).
    pub loss: f64,
}

#[derive(Debug, Clone)]
enum Variant {
    Rnd(Rnd),
    Icm(Icm),
    Disagreement(Disagreement),
    Apt,
}

#[derive(Debug, Clone)]
pub struct IntrinsicModule {
    config: IntrinsicConfig,
    obs_dim: usize,
    act_dim: usize,
    variant: Variant,
    normalizer: RewardNormalizer,
}

impl IntrinsicModule {
    pub fn new<R: Rng + ?Sized>(
        config: IntrinsicConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut R,
    ) -> Result<Self, IntrinsicError> {
        config.validate()?;
        let variant = match config.kind {
            IntrinsicKind::Rnd => Variant::Rnd(Rnd::new(&config, obs_dim, rng)?),
            IntrinsicKind::Icm => Variant::Icm(Icm::new(&config, obs_dim, act_dim, rng)?),
            IntrinsicKind::Disagreement => {
                Variant::Disagreement(Disagreement::new(&config, obs_dim, act_dim, rng)?)
            }
            IntrinsicKind::Apt => Variant::Apt,
        };
        let normalizer = RewardNormalizer::with_decay(config.normalizer_decay);
        Ok(Self {
            config,
            obs_dim,
            act_dim,
            variant,
            normalizer,
        })
    }

    /// RND with explicit target and predictor networks.
    pub fn rnd_from_networks(
        config: IntrinsicConfig,
        target: Mlp<f32>,
        predictor: Mlp<f32>,
        act_dim: usize,
    ) -> Result<Self, IntrinsicError> {
        config.validate()?;
        let obs_dim = target.input_dim();
        let normalizer = RewardNormalizer::with_decay(config.normalizer_decay);
        Ok(Self {
            variant: Variant::Rnd(Rnd::from_networks(&config, target, predictor)?),
            config: IntrinsicConfig {
                kind: IntrinsicKind::Rnd,
                ..config
            },
            obs_dim,
            act_dim,
            normalizer,
        })
    }

    pub fn kind(&self) -> IntrinsicKind {
        self.config.kind
    }

    pub fn config(&self) -> &IntrinsicConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &RewardNormalizer {
        &self.normalizer
    }

    /// Unnormalized reward per row; leaves all state untouched.
    pub fn raw_reward(&self, rows: TransitionRows<'_>) -> Result<Vec<f32>, IntrinsicError> {
        rows.check(self.obs_dim, self.act_dim)?;
        let r = match &self.variant {
            Variant::Rnd(m) => m.reward(rows)?,
            Variant::Icm(m) => m.reward(rows)?,
            Variant::Disagreement(m) => m.reward(rows)?,
            Variant::Apt => apt_rewards(rows.next_obs, self.config.apt_k, self.config.apt_eps)?,
        };
        if r.iter().any(|x| !x.is_finite()) {
            return Err(IntrinsicError::NonFinite("intrinsic reward"));
        }
        Ok(r)
    }

    /// Self-supervised loss on `rows` without updating anything.
    pub fn loss(&self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        rows.check(self.obs_dim, self.act_dim)?;
        Ok(match &self.variant {
            Variant::Rnd(m) => m.loss(rows)?,
            Variant::Icm(m) => m.loss(rows)?.0,
            Variant::Disagreement(m) => m.loss(rows)?,
            Variant::Apt => 0.0,
        })
    }

    /// Rewards for `rows`, normalized with running statistics that first
    /// absorb this batch.
    pub fn intrinsic_reward(
        &mut self,
        rows: TransitionRows<'_>,
    ) -> Result<IntrinsicOutput, IntrinsicError> {
        let raw = self.raw_reward(rows)?;
        let loss = self.loss(rows)?;
        let rewards = if self.config.normalize {
            self.normalizer.update(&raw);
            self.normalizer.normalize(&raw)
        } else {
            raw.clone()
        };
        Ok(IntrinsicOutput { rewards, raw, loss })
    }

    /// One gradient step on the module's predictors; returns the pre-step loss.
    pub fn update_module(&mut self, rows: TransitionRows<'_>) -> Result<f64, IntrinsicError> {
        rows.check(self.obs_dim, self.act_dim)?;
        match &mut self.variant {
            Variant::Rnd(m) => m.update(rows),
            Variant::Icm(m) => m.update(rows),
            Variant::Disagreement(m) => m.update(rows),
            Variant::Apt => Ok(0.0),
        }
    }

    /// Named learned networks, for persistence and inspection.
    pub fn networks(&self) -> Vec<(String, &Mlp<f32>)> {
        match &self.variant {
            Variant::Rnd(m) => vec![
                ("rnd_target".into(), &m.target),
                ("rnd_predictor".into(), &m.predictor),
            ],
            Variant::Icm(m) => vec![
                ("icm_embed".into(), &m.embed),
                ("icm_forward".into(), &m.forward),
                ("icm_inverse".into(), &m.inverse),
            ],
            Variant::Disagreement(m) => m
                .members
                .iter()
                .enumerate()
                .map(|(i, n)| (format!("disagreement_{i}"), n))
                .collect(),
            Variant::Apt => Vec::new(),
        }
    }

    /// Writes every learned network as `<name>.bin` under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), IntrinsicError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(NnError::from)?;
        for (name, net) in self.networks() {
            net.save(dir.join(format!("{name}.bin")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, rng: &mut ChaCha8Rng) -> (Matrix<f32>, Matrix<f32>, Matrix<f32>) {
        let mut m = |c| {
            Matrix::from_vec(n, c, (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        (m(4), m(2), m(4))
    }

    #[test]
    fn every_kind_emits_finite_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (o, a, n) = random_rows(32, &mut rng);
        let rows = TransitionRows {
            obs: &o,
            action: &a,
            next_obs: &n,
        };
        for kind in [
            IntrinsicKind::Rnd,
            IntrinsicKind::Icm,
            IntrinsicKind::Disagreement,
            IntrinsicKind::Apt,
        ] {
            let cfg = IntrinsicConfig {
                kind,
                hidden: vec![16],
                ..IntrinsicConfig::default()
            };
            let mut m = IntrinsicModule::new(cfg, 4, 2, &mut rng).unwrap();
            let out = m.intrinsic_reward(rows).unwrap();
            assert_eq!(out.rewards.len(), 32);
            assert!(out.rewards.iter().all(|r| r.is_finite()));
            m.update_module(rows).unwrap();
        }
    }

    #[test]
    fn apt_rejects_batch_not_larger_than_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (o, a, n) = random_rows(12, &mut rng);
        let cfg = IntrinsicConfig {
            kind: IntrinsicKind::Apt,
            ..IntrinsicConfig::default()
        };
        let m = IntrinsicModule::new(cfg, 4, 2, &mut rng).unwrap();
        let rows = TransitionRows {
            obs: &o,
            action: &a,
            next_obs: &n,
        };
        assert!(matches!(
            m.raw_reward(rows),
            Err(IntrinsicError::BatchTooSmall { need: 12, got: 12 })
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = IntrinsicModule::new(IntrinsicConfig::default(), 4, 2, &mut rng).unwrap();
        let o = Matrix::zeros(3, 4);
        let a = Matrix::zeros(2, 2);
        assert!(m
            .raw_reward(TransitionRows {
                obs: &o,
                action: &a,
                next_obs: &o
            })
            .is_err());
    }
}
