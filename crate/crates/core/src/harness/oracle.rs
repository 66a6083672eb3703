use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{stream, streams, ExperimentConfig, HarnessError};
use crate::ddpg::{DdpgAgent, ReplayBuffer, Transition};
use crate::envs::{PointMassEnv, PointMassState, PointMassTask, ACTION_DIM, OBS_DIM};
use crate::nn::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub actor_path: PathBuf,
    pub config_hash: String,
    pub steps: u64,
    /// Mean distance to the origin over evaluation episodes, all steps included.
    pub mean_distance: f64,
    pub converged: bool,
}

/// Mean over episodes and steps of `‖p‖` under the greedy actor.
pub fn mean_center_distance(
    actor: &Mlp<f32>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<f64, HarnessError> {
    let mut rng = stream(seed, streams::EVAL);
    let mut env = PointMassEnv::new(cfg.pointmass(), PointMassTask::CenterSeeking);
    let (mut sum, mut n) = (0.0, 0usize);
    for _ in 0..cfg.eval_episodes {
        let mut s = PointMassState::sample(&mut rng);
        env.reset_to(s);
        loop {
            let a = actor.forward(&s.observation())?;
            let out = env.step([a[0] as f64, a[1] as f64])?;
            s = out.state;
            sum += s.position[0].hypot(s.position[1]);
            n += 1;
            if out.truncated || out.done {
                break;
            }
        }
    }
    Ok(sum / n as f64)
}

/// DDPG on the center-seeking reward; saves `oracle_actor.bin` and
/// `oracle.json` into `out_dir`. A run whose mean distance stays above
/// `oracle_threshold` is flagged, not rejected.
pub fn train_oracle(
    cfg: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<OracleSummary, HarnessError> {
    cfg.validate()?;
    let actor_path = out_dir.join("oracle_actor.bin");
    let json = out_dir.join("oracle.json");
    if actor_path.exists() && json.exists() {
        if let Ok(s) = serde_json::from_str::<OracleSummary>(&fs::read_to_string(&json)?) {
            if s.config_hash == cfg.content_hash() {
                return Ok(s);
            }
        }
    }
    let mut dcfg = cfg.ddpg();
    dcfg.learning_rate = cfg.oracle_learning_rate;
    let mut agent = DdpgAgent::new(
        OBS_DIM,
        ACTION_DIM,
        dcfg.clone(),
        &mut stream(seed, streams::AGENT_INIT),
    )?;
    let mut buffer = ReplayBuffer::new(
        dcfg.replay_capacity,
        OBS_DIM,
        ACTION_DIM,
        dcfg.n_step,
        dcfg.gamma as f32,
    )?;
    let mut env_rng = stream(seed, streams::ENV);
    let mut act_rng = stream(seed, streams::ACT);
    let mut replay_rng = stream(seed, streams::REPLAY);
    let mut env = PointMassEnv::new(cfg.pointmass(), PointMassTask::CenterSeeking);
    let mut state = env.reset(&mut env_rng);
    for t in 0..cfg.oracle_steps {
        let obs = state.observation();
        let action = agent.act(&obs, true, t, &mut act_rng)?;
        let out = env.step([action[0] as f64, action[1] as f64])?;
        buffer.push(&Transition {
            obs: obs.to_vec(),
            action,
            reward: out.reward as f32,
            next_obs: out.state.observation().to_vec(),
            done: out.done,
        })?;
        state = out.state;
        if out.truncated || out.done {
            state = env.reset(&mut env_rng);
            buffer.start_episode();
        }
        if agent.should_update(t) {
            let batch = buffer.sample(dcfg.batch_size, &mut replay_rng)?;
            agent.update(&batch, &batch.inner_reward, None)?;
        }
    }
    fs::create_dir_all(out_dir)?;
    agent.actor.save(&actor_path)?;
    let mean_distance = mean_center_distance(&agent.actor, cfg, seed)?;
    let summary = OracleSummary {
        actor_path,
        config_hash: cfg.content_hash(),
        steps: cfg.oracle_steps,
        mean_distance,
        converged: mean_distance < cfg.oracle_threshold,
    };
    fs::write(json, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
