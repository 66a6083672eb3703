//! Planar point mass driven by a bounded force.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;

pub const OBS_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

/// Physical constants. The plane is `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    pub dt: f64,
    pub force_gain: f64,
    pub damping: f64,
    pub max_speed: f64,
    pub episode_len: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            force_gain: 1.0,
            damping: 0.95,
            max_speed: 1.0,
            episode_len: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl PointMassState {
    pub const ORIGIN: PointMassState = PointMassState {
        position: [0.0, 0.0],
        velocity: [0.0, 0.0],
    };

    /// Uniform position on the plane, zero velocity.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            position: [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
            velocity: [0.0, 0.0],
        }
    }

    /// `(position, velocity)` as the agent sees it.
    pub fn observation(&self) -> [f32; OBS_DIM] {
        [
            self.position[0] as f32,
            self.position[1] as f32,
            self.velocity[0] as f32,
            self.velocity[1] as f32,
        ]
    }
}

/// Deterministic initial state for a seed.
pub fn pointmass_reset(seed: u64) -> PointMassState {
    PointMassState::sample(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Reward definition for a phase of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PointMassTask {
    /// Pretraining: reward is exactly zero.
    RewardFree,
    /// Dense Gaussian bump `scale * exp(-|p - target|² / sigma²)`.
    Target {
        target: [f64; 2],
        sigma: f64,
        scale: f64,
    },
    /// `-|p|²`, used to train the center-seeking reference policy.
    CenterSeeking,
}

impl PointMassTask {
    pub fn reward(&self, state: &PointMassState) -> f64 {
        match *self {
            PointMassTask::RewardFree => 0.0,
            PointMassTask::Target {
                target,
                sigma,
                scale,
            } => {
                let dx = state.position[0] - target[0];
                let dy = state.position[1] - target[1];
                scale * (-(dx * dx + dy * dy) / (sigma * sigma)).exp()
            }
            PointMassTask::CenterSeeking => {
                -(state.position[0].powi(2) + state.position[1].powi(2))
            }
        }
    }

    /// Target drawn uniformly from `[-range, range]²`.
    pub fn random_target<R: Rng + ?Sized>(rng: &mut R, range: f64, sigma: f64) -> Self {
        PointMassTask::Target {
            target: [rng.gen_range(-range..=range), rng.gen_range(-range..=range)],
            sigma,
            scale: 1.0,
        }
    }
}

/// One semi-implicit Euler step. Returns the next state; episodes never terminate.
pub fn pointmass_step(
    cfg: &PointMassConfig,
    state: &PointMassState,
    action: [f64; 2],
) -> Result<PointMassState, EnvError> {
    if !action.iter().all(|a| a.is_finite()) {
        return Err(EnvError::NonFiniteAction);
    }
    let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let mut v = [
        cfg.damping * state.velocity[0] + cfg.dt * cfg.force_gain * a[0],
        cfg.damping * state.velocity[1] + cfg.dt * cfg.force_gain * a[1],
    ];
    let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if speed > cfg.max_speed {
        let s = cfg.max_speed / speed;
        v = [v[0] * s, v[1] * s];
    }
    let mut p = [
        state.position[0] + cfg.dt * v[0],
        state.position[1] + cfg.dt * v[1],
    ];
    for i in 0..2 {
        if p[i] > 1.0 {
            p[i] = 1.0;
            v[i] = 0.0;
        } else if p[i] < -1.0 {
            p[i] = -1.0;
            v[i] = 0.0;
        }
    }
    Ok(PointMassState {
        position: p,
        velocity: v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: PointMassState,
    pub reward: f64,
    /// True termination; always false for this domain.
    pub done: bool,
    /// Time limit reached.
    pub truncated: bool,
}

/// Episodic wrapper with a fixed time limit.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    pub config: PointMassConfig,
    pub task: PointMassTask,
    state: PointMassState,
    t: usize,
}

impl PointMassEnv {
    pub fn new(config: PointMassConfig, task: PointMassTask) -> Self {
        Self {
            config,
            task,
            state: PointMassState::ORIGIN,
            t: 0,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> PointMassState {
        self.state = PointMassState::sample(rng);
        self.t = 0;
        self.state
    }

    pub fn reset_to(&mut self, state: PointMassState) {
        self.state = state;
        self.t = 0;
    }

    pub fn state(&self) -> &PointMassState {
        &self.state
    }

    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn step(&mut self, action: [f64; 2]) -> Result<StepOutcome, EnvError> {
        let next = pointmass_step(&self.config, &self.state, action)?;
        self.state = next;
        self.t += 1;
        Ok(StepOutcome {
            state: next,
            reward: self.task.reward(&next),
            done: false,
            truncated: self.t >= self.config.episode_len,
        })
    }
}
