use std::fs;
use std::path::{Path, PathBuf};

use super::io::{checkpoint_dir, load_actor, params_digest, RunInfo, TrainRow, TrajectoryRow};
use super::{stream, streams, ExperimentConfig, HarnessError};
use crate::ddpg::{DdpgAgent, ReplayBuffer, Transition};
use crate::envs::{PointMassEnv, PointMassTask, ACTION_DIM, OBS_DIM};
use crate::intrinsic::{IntrinsicModule, TransitionRows};
use crate::polter::{maybe_snapshot, regularized_actor_update, EnsemblePolicy, ScheduleCursor};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub run_dir: PathBuf,
    pub info: RunInfo,
    /// True when an identical completed run was found and nothing was recomputed.
    pub reused: bool,
}

/// Steps `[c - W, c)` preceding each entropy checkpoint `c`.
pub(crate) fn entropy_windows(cfg: &ExperimentConfig) -> Vec<(f64, u64, u64)> {
    cfg.entropy_fractions
        .iter()
        .map(|&f| {
            let c = (f * cfg.pretrain_steps as f64).round() as u64;
            (f, c.saturating_sub(cfg.entropy_window as u64), c)
        })
        .collect()
}

/// Reward-free pretraining with intrinsic rewards, optional ensemble
/// regularization and scheduled snapshots.
///
/// Writes `config.cfg`, `train.csv`, `trajectory.csv`, `checkpoints/step_N/`,
/// `ensemble/` and `run.json` into `run_dir`. A completed run with the same
/// config and seed is reused; a run directory holding a different config is
/// rejected.
pub fn run_pretraining(
    cfg: &ExperimentConfig,
    seed: u64,
    run_dir: &Path,
) -> Result<PretrainSummary, HarnessError> {
    cfg.validate()?;
    let hash = cfg.content_hash();
    if let Some(info) = RunInfo::read(run_dir) {
        if info.config_hash != hash || info.seed != seed {
            return Err(HarnessError::Config(format!(
                "{} holds a run with config {} seed {}, requested config {hash} seed {seed}",
                run_dir.display(),
                info.config_hash,
                info.seed
            )));
        }
        if info.complete {
            return Ok(PretrainSummary {
                run_dir: run_dir.to_path_buf(),
                info,
                reused: true,
            });
        }
    }
    if run_dir.join("config.cfg").exists() {
        let old = ExperimentConfig::from_file(run_dir.join("config.cfg"))?;
        if old.content_hash() != hash {
            return Err(HarnessError::Config(format!(
                "{} was started with a different config",
                run_dir.display()
            )));
        }
    }
    for sub in ["checkpoints", "ensemble"] {
        let _ = fs::remove_dir_all(run_dir.join(sub));
    }
    fs::create_dir_all(run_dir)?;
    cfg.write_resolved(run_dir.join("config.cfg"))?;
    RunInfo {
        kind: "pretrain".into(),
        variant: cfg.variant_label(),
        seed,
        config_hash: hash.clone(),
        steps: 0,
        checkpoints: Vec::new(),
        snapshots: Vec::new(),
        actor_digest: String::new(),
        replay_digest: String::new(),
        complete: false,
    }
    .write(run_dir)?;

    let mut init_rng = stream(seed, streams::AGENT_INIT);
    let mut intr_rng = stream(seed, streams::INTRINSIC_INIT);
    let mut env_rng = stream(seed, streams::ENV);
    let mut act_rng = stream(seed, streams::ACT);
    let mut replay_rng = stream(seed, streams::REPLAY);

    let dcfg = cfg.ddpg();
    let mut agent = DdpgAgent::new(OBS_DIM, ACTION_DIM, dcfg.clone(), &mut init_rng)?;
    let mut intrinsic = IntrinsicModule::new(cfg.intrinsic(), OBS_DIM, ACTION_DIM, &mut intr_rng)?;
    let mut buffer = ReplayBuffer::new(
        dcfg.replay_capacity,
        OBS_DIM,
        ACTION_DIM,
        dcfg.n_step,
        dcfg.gamma as f32,
    )?;
    let mut env = PointMassEnv::new(cfg.pointmass(), PointMassTask::RewardFree);

    let polter_cfg = cfg.polter_config();
    let mut ensemble = if cfg.polter && !cfg.polter_target.is_empty() {
        EnsemblePolicy::fixed(load_actor(
            Path::new(&cfg.polter_target),
            "reference actor",
        )?)
    } else {
        EnsemblePolicy::new()
    };
    let mut cursor = ScheduleCursor::new(cfg.snapshot_schedule());
    let active = |e: &EnsemblePolicy| {
        if cfg.polter && polter_cfg.alpha != 0.0 {
            e.k()
        } else {
            0
        }
    };

    let windows = entropy_windows(cfg);
    let dump = |t: u64| match cfg.trajectory_dump.as_str() {
        "all" => true,
        "windows" => windows.iter().any(|&(_, lo, hi)| t >= lo && t < hi),
        _ => false,
    };
    let mut train_log = csv::Writer::from_path(run_dir.join("train.csv"))?;
    let mut traj_log = csv::Writer::from_path(run_dir.join("trajectory.csv"))?;
    let mut checkpoints = Vec::new();

    let mut state = env.reset(&mut env_rng);
    let mut needs_reset = false;
    for t in 0..cfg.pretrain_steps {
        if t == 0 || needs_reset {
            if needs_reset {
                state = env.reset(&mut env_rng);
                buffer.start_episode();
            }
            if cfg.polter {
                maybe_snapshot(&mut ensemble, &mut cursor, t, &agent.actor);
            }
        }
        let obs = state.observation();
        let action = agent.act(&obs, true, t, &mut act_rng)?;
        let out = env.step([action[0] as f64, action[1] as f64])?;
        buffer.push(&Transition {
            obs: obs.to_vec(),
            action: action.clone(),
            reward: out.reward as f32,
            next_obs: out.state.observation().to_vec(),
            done: out.done,
        })?;
        if dump(t) {
            traj_log.serialize(TrajectoryRow {
                step: t,
                pos_x: state.position[0],
                pos_y: state.position[1],
                vel_x: state.velocity[0],
                vel_y: state.velocity[1],
                action_x: action[0] as f64,
                action_y: action[1] as f64,
                reward: out.reward,
            })?;
        }
        state = out.state;
        needs_reset = out.truncated || out.done;

        if agent.should_update(t) {
            let batch = buffer.sample(dcfg.batch_size, &mut replay_rng)?;
            let first_obs = batch.inner_obs.select_rows(&batch.offsets);
            let first_next = batch.inner_next_obs.select_rows(&batch.offsets);
            intrinsic.update_module(TransitionRows {
                obs: &first_obs,
                action: &batch.action,
                next_obs: &first_next,
            })?;
            let rewards = intrinsic.intrinsic_reward(TransitionRows {
                obs: &batch.inner_obs,
                action: &batch.inner_action,
                next_obs: &batch.inner_next_obs,
            })?;
            let diag = if cfg.polter {
                regularized_actor_update(
                    &mut agent,
                    &ensemble,
                    &batch,
                    &rewards.rewards,
                    &polter_cfg,
                )?
            } else {
                agent.update(&batch, &rewards.rewards, None)?
            };
            if agent.updates() % cfg.log_every == 0 {
                let n = rewards.rewards.len() as f64;
                train_log.serialize(TrainRow {
                    step: t,
                    intrinsic_reward: rewards.rewards.iter().map(|&r| r as f64).sum::<f64>() / n,
                    actor_loss: diag.actor_loss,
                    critic_loss: diag.critic_loss,
                    polter_term: diag.regularizer,
                    ensemble_k: active(&ensemble),
                })?;
            }
        }

        let done_steps = t + 1;
        if done_steps % cfg.checkpoint_every == 0 || done_steps == cfg.pretrain_steps {
            agent.save(checkpoint_dir(run_dir, done_steps))?;
            if cfg.save_replay && done_steps == cfg.pretrain_steps {
                buffer.save(checkpoint_dir(run_dir, done_steps).join("replay.bin"))?;
            }
            checkpoints.push(done_steps);
        }
    }
    train_log.flush()?;
    traj_log.flush()?;
    ensemble.save(run_dir.join("ensemble"))?;
    intrinsic.save(run_dir.join("intrinsic"))?;

    let info = RunInfo {
        kind: "pretrain".into(),
        variant: cfg.variant_label(),
        seed,
        config_hash: hash,
        steps: cfg.pretrain_steps,
        checkpoints,
        snapshots: ensemble.snapshot_steps(),
        actor_digest: params_digest(&agent.actor),
        replay_digest: format!("{:016x}", buffer.digest()),
        complete: true,
    };
    info.write(run_dir)?;
    Ok(PretrainSummary {
        run_dir: run_dir.to_path_buf(),
        info,
        reused: false,
    })
}
