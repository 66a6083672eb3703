use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::losses::{actor_pass, critic_loss, td_targets};
use super::replay::NStepBatch;
use super::DdpgError;
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, Dense, LayerGrad, Matrix, Mlp};

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub noise_std: f64,
    pub noise_clip: f64,
    pub seed_frames: u64,
    pub update_every: u64,
    pub replay_capacity: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            batch_size: 256,
            learning_rate: 1e-4,
            tau: 0.01,
            gamma: 0.99,
            n_step: 3,
            noise_std: 0.2,
            noise_clip: 0.3,
            seed_frames: 4000,
            update_every: 2,
            replay_capacity: 1_000_000,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::Config(m.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be non-empty and positive");
        }
        if self.batch_size == 0 || self.n_step == 0 || self.update_every == 0 {
            return bad("batch_size, n_step and update_every must be positive");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.noise_std >= 0.0) || !(self.noise_clip >= 0.0) {
            return bad("learning rate must be positive and noise parameters non-negative");
        }
        if self.replay_capacity == 0 {
            return bad("replay capacity must be positive");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Adds a differentiable penalty on the actor's actions to the actor loss.
pub trait ActorRegularizer {
    /// Weighted penalty value and its gradient w.r.t. `actions` (rows match `obs`).
    fn penalty(
        &self,
        obs: &Matrix<f32>,
        actions: &Matrix<f32>,
    ) -> Result<(f64, Matrix<f32>), DdpgError>;
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Weighted regularizer value, 0 when none was applied.
    pub regularizer: f64,
    pub mean_q: f64,
    pub critic_grad_norm: f64,
    pub actor_grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub actor_target: Mlp<f32>,
    pub critic_target: Mlp<f32>,
    pub actor_opt: AdamState<f32>,
    pub critic_opt: AdamState<f32>,
    updates: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: DdpgConfig,
    obs_dim: usize,
    act_dim: usize,
    updates: u64,
    actor_adam_step: u64,
    critic_adam_step: u64,
}

const NETS: [&str; 4] = ["actor", "critic", "actor_target", "critic_target"];

impl DdpgAgent {
    /// Actor `obs → hidden (ReLU) → act (tanh)`, critic `[obs, act] → hidden (ReLU) → 1`.
    /// Targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        config: DdpgConfig,
        rng: &mut R,
    ) -> Result<Self, DdpgError> {
        config.validate()?;
        let actor = Mlp::with_hidden(
            obs_dim,
            &config.hidden,
            act_dim,
            Activation::Relu,
            Activation::Tanh,
            rng,
        )?;
        let critic = Mlp::with_hidden(
            obs_dim + act_dim,
            &config.hidden,
            1,
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        Ok(Self::from_networks(config, actor, critic))
    }

    /// Wraps existing online networks; targets are copies and optimizers fresh.
    pub fn from_networks(config: DdpgConfig, actor: Mlp<f32>, critic: Mlp<f32>) -> Self {
        let adam = config.adam();
        Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: AdamState::new(&actor, adam),
            critic_opt: AdamState::new(&critic, adam),
            actor,
            critic,
            config,
            updates: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Discards optimizer moments (used when finetuning starts).
    pub fn reset_optimizers(&mut self) {
        let adam = self.config.adam();
        self.actor_opt = AdamState::new(&self.actor, adam);
        self.critic_opt = AdamState::new(&self.critic, adam);
    }

    /// Deterministic action `μ(s)`.
    pub fn act_greedy(&self, obs: &[f32]) -> Result<Vec<f32>, DdpgError> {
        Ok(self.actor.forward(obs)?)
    }

    /// Clipped Gaussian exploration noise, one component.
    pub fn exploration_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f32 {
        if self.config.noise_std == 0.0 {
            return 0.0;
        }
        let normal = Normal::new(0.0, self.config.noise_std).expect("validated std");
        let c = self.config.noise_clip;
        normal.sample(rng).clamp(-c, c) as f32
    }

    /// Behaviour action at env step `step`. During the first `seed_frames`
    /// exploring steps the action is uniform over the box.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f32],
        explore: bool,
        step: u64,
        rng: &mut R,
    ) -> Result<Vec<f32>, DdpgError> {
        if !explore {
            return self.act_greedy(obs);
        }
        if obs.len() != self.obs_dim() {
            return Err(DdpgError::Config(format!(
                "observation of length {} for actor input {}",
                obs.len(),
                self.obs_dim()
            )));
        }
        if step < self.config.seed_frames {
            return Ok((0..self.act_dim())
                .map(|_| rng.gen_range(-1.0f32..=1.0))
                .collect());
        }
        let mut a = self.act_greedy(obs)?;
        for x in a.iter_mut() {
            *x = (*x + self.exploration_noise(rng)).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Whether env step `step` triggers an update.
    pub fn should_update(&self, step: u64) -> bool {
        step >= self.config.seed_frames && step.is_multiple_of(self.config.update_every)
    }

    /// One critic step, one actor step (plus the optional regularizer) and an
    /// EMA update of both targets. `inner_rewards` holds one reward per inner
    /// row of `batch`.
    pub fn update(
        &mut self,
        batch: &NStepBatch,
        inner_rewards: &[f32],
        regularizer: Option<&dyn ActorRegularizer>,
    ) -> Result<UpdateDiagnostics, DdpgError> {
        if inner_rewards.len() != batch.inner_obs.rows() {
            return Err(DdpgError::Config(format!(
                "{} rewards for {} inner transitions",
                inner_rewards.len(),
                batch.inner_obs.rows()
            )));
        }
        let gamma = self.config.gamma as f32;
        let returns = batch.discounted_returns(inner_rewards, gamma);
        let y = td_targets(
            &self.actor_target,
            &self.critic_target,
            &returns,
            &batch.next_obs,
            &batch.bootstrap_discount,
        )?;
        let c = critic_loss(&self.critic, &batch.obs, &batch.action, &y)?;
        adam_step(&mut self.critic, &c.grads, &mut self.critic_opt)?;

        let pass = actor_pass(&self.actor, &self.critic, &batch.obs)?;
        let (reg_value, a_grads) = match regularizer {
            None => (0.0, pass.param_grads(&self.actor, None)?),
            Some(r) => {
                let (v, g) = r.penalty(&batch.obs, pass.actions())?;
                if !v.is_finite() {
                    return Err(DdpgError::NonFiniteLoss("actor regularizer"));
                }
                (v, pass.param_grads(&self.actor, Some(&g))?)
            }
        };
        adam_step(&mut self.actor, &a_grads, &mut self.actor_opt)?;

        let tau = self.config.tau as f32;
        self.critic_target.soft_update_from(&self.critic, tau)?;
        self.actor_target.soft_update_from(&self.actor, tau)?;
        self.updates += 1;
        Ok(UpdateDiagnostics {
            critic_loss: c.loss as f64,
            actor_loss: pass.loss as f64,
            regularizer: reg_value,
            mean_q: c.mean_q as f64,
            critic_grad_norm: c.grads.param_norm() as f64,
            actor_grad_norm: a_grads.param_norm() as f64,
        })
    }

    /// Writes networks, optimizer moments and `agent.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DdpgError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, net) in NETS.iter().zip(self.nets()) {
            net.save(dir.join(format!("{name}.bin")))?;
        }
        for (name, net, opt) in [
            ("actor", &self.actor, &self.actor_opt),
            ("critic", &self.critic, &self.critic_opt),
        ] {
            moments_as_mlp(net, &opt.first)?.save(dir.join(format!("{name}_adam_m.bin")))?;
            moments_as_mlp(net, &opt.second)?.save(dir.join(format!("{name}_adam_v.bin")))?;
        }
        let side = Sidecar {
            config: self.config.clone(),
            obs_dim: self.obs_dim(),
            act_dim: self.act_dim(),
            updates: self.updates,
            actor_adam_step: self.actor_opt.step,
            critic_adam_step: self.critic_opt.step,
        };
        fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DdpgError> {
        let dir = dir.as_ref();
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join("agent.json"))?)?;
        let mut nets = NETS
            .iter()
            .map(|n| Mlp::load(dir.join(format!("{n}.bin"))))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter();
        let (actor, critic) = (nets.next().unwrap(), nets.next().unwrap());
        let (actor_target, critic_target) = (nets.next().unwrap(), nets.next().unwrap());
        if actor.input_dim() != side.obs_dim || actor.output_dim() != side.act_dim {
            return Err(DdpgError::Config(format!(
                "actor shape {}→{} disagrees with sidecar {}→{}",
                actor.input_dim(),
                actor.output_dim(),
                side.obs_dim,
                side.act_dim
            )));
        }
        let adam = side.config.adam();
        let load_opt = |name: &str, net: &Mlp<f32>, step: u64| -> Result<_, DdpgError> {
            let m = Mlp::load(dir.join(format!("{name}_adam_m.bin")))?;
            let v = Mlp::load(dir.join(format!("{name}_adam_v.bin")))?;
            if m.layer_sizes() != net.layer_sizes() || v.layer_sizes() != net.layer_sizes() {
                return Err(DdpgError::Config(format!(
                    "{name} optimizer state shape mismatch"
                )));
            }
            let mut st = AdamState::new(net, adam);
            st.step = step;
            st.first = mlp_as_moments(&m);
            st.second = mlp_as_moments(&v);
            Ok(st)
        };
        let actor_opt = load_opt("actor", &actor, side.actor_adam_step)?;
        let critic_opt = load_opt("critic", &critic, side.critic_adam_step)?;
        Ok(Self {
            config: side.config,
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            updates: side.updates,
        })
    }

    fn nets(&self) -> [&Mlp<f32>; 4] {
        [
            &self.actor,
            &self.critic,
            &self.actor_target,
            &self.critic_target,
        ]
    }

    /// Bitwise equality of all networks and optimizer state.
    pub fn bit_eq(&self, other: &DdpgAgent) -> bool {
        let bits = |v: &[LayerGrad<f32>]| -> Vec<u32> {
            v.iter()
                .flat_map(|l| l.weights.iter().chain(&l.bias).map(|x| x.to_bits()))
                .collect()
        };
        self.nets()
            .iter()
            .zip(other.nets())
            .all(|(a, b)| a.bit_eq(b))
            && self.actor_opt.step == other.actor_opt.step
            && self.critic_opt.step == other.critic_opt.step
            && bits(&self.actor_opt.first) == bits(&other.actor_opt.first)
            && bits(&self.actor_opt.second) == bits(&other.actor_opt.second)
            && bits(&self.critic_opt.first) == bits(&other.critic_opt.first)
            && bits(&self.critic_opt.second) == bits(&other.critic_opt.second)
    }
}

fn moments_as_mlp(net: &Mlp<f32>, moments: &[LayerGrad<f32>]) -> Result<Mlp<f32>, DdpgError> {
    let layers = net
        .layers()
        .iter()
        .zip(moments)
        .map(|(l, m)| {
            Dense::from_parts(
                l.in_dim(),
                l.out_dim(),
                Activation::Identity,
                m.weights.clone(),
                m.bias.clone(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Mlp::from_layers(layers)?)
}

fn mlp_as_moments(m: &Mlp<f32>) -> Vec<LayerGrad<f32>> {
    m.layers()
        .iter()
        .map(|l| LayerGrad {
            weights: l.weights().to_vec(),
            bias: l.bias().to_vec(),
        })
        .collect()
}
