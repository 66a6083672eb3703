use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{checkpoint_dir, list_checkpoints, write_csv};
use super::{stream, streams, ExperimentConfig, HarnessError};
use crate::ddpg::{DdpgAgent, ReplayBuffer, Transition};
use crate::envs::{PointMassEnv, PointMassState, PointMassTask, ACTION_DIM, OBS_DIM};
use crate::nn::Mlp;

/// Where the finetuned agent's weights come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FinetuneSource {
    Checkpoint {
        run_dir: PathBuf,
        step: u64,
    },
    /// Freshly initialized DDPG, the no-pretraining baseline.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRow {
    pub step: u64,
    pub eval_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// Always zero: the ensemble term is a pretraining-only loss.
    pub polter_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub seed: u64,
    pub source: String,
    pub target: [f64; 2],
    pub rows: Vec<FinetuneRow>,
    pub final_return: f64,
    pub normalized_score: f64,
}

/// The seed's finetuning task: a Gaussian bump at a random target.
pub fn finetune_task(cfg: &ExperimentConfig, seed: u64) -> PointMassTask {
    PointMassTask::random_target(
        &mut stream(seed, streams::TASK),
        cfg.target_range,
        cfg.target_sigma,
    )
}

fn eval_starts(cfg: &ExperimentConfig, seed: u64) -> Vec<PointMassState> {
    let mut rng = stream(seed, streams::EVAL);
    (0..cfg.eval_episodes)
        .map(|_| PointMassState::sample(&mut rng))
        .collect()
}

fn rollout_return(
    actor: &Mlp<f32>,
    env: &mut PointMassEnv,
    start: PointMassState,
) -> Result<f64, HarnessError> {
    env.reset_to(start);
    let mut state = start;
    let mut total = 0.0;
    loop {
        let a = actor.forward(&state.observation())?;
        let out = env.step([a[0] as f64, a[1] as f64])?;
        total += out.reward;
        state = out.state;
        if out.truncated || out.done {
            return Ok(total);
        }
    }
}

/// Mean undiscounted return of the greedy actor over the seed's fixed
/// evaluation start states.
pub fn evaluate_policy(
    actor: &Mlp<f32>,
    cfg: &ExperimentConfig,
    task: PointMassTask,
    seed: u64,
) -> Result<f64, HarnessError> {
    let mut env = PointMassEnv::new(cfg.pointmass(), task);
    let starts = eval_starts(cfg, seed);
    let mut sum = 0.0;
    for s in &starts {
        sum += rollout_return(actor, &mut env, *s)?;
    }
    Ok(sum / starts.len() as f64)
}

fn initial_agent(
    cfg: &ExperimentConfig,
    source: &FinetuneSource,
    seed: u64,
) -> Result<(DdpgAgent, Option<ReplayBuffer>), HarnessError> {
    let mut dcfg = cfg.ddpg();
    dcfg.seed_frames = cfg.finetune_seed_frames;
    let fresh =
        |rng_id| DdpgAgent::new(OBS_DIM, ACTION_DIM, dcfg.clone(), &mut stream(seed, rng_id));
    match source {
        FinetuneSource::Scratch => Ok((fresh(streams::AGENT_INIT)?, None)),
        FinetuneSource::Checkpoint { run_dir, step } => {
            let dir = checkpoint_dir(run_dir, *step);
            if !dir.join("actor.bin").exists() {
                let available = list_checkpoints(run_dir).unwrap_or_default();
                return Err(HarnessError::MissingArtifact(format!(
                    "no checkpoint at step {step} in {}; available steps: {available:?}",
                    run_dir.display()
                )));
            }
            let actor = Mlp::load(dir.join("actor.bin"))?;
            let critic = if cfg.finetune_carry_critic {
                Mlp::load(dir.join("critic.bin"))?
            } else {
                fresh(streams::AGENT_INIT)?.critic
            };
            let replay = if cfg.finetune_keep_replay {
                let path = dir.join("replay.bin");
                if !path.exists() {
                    return Err(HarnessError::MissingArtifact(format!(
                        "finetune_keep_replay needs {} (pretrain with save_replay = true)",
                        path.display()
                    )));
                }
                Some(ReplayBuffer::load(path)?)
            } else {
                None
            };
            Ok((DdpgAgent::from_networks(dcfg, actor, critic), replay))
        }
    }
}

/// Trains on the task reward (no ensemble term) and evaluates at step 0,
/// every `eval_every` steps and at the end. Writes `finetune.csv` and
/// `finetune.json` to `out_dir`.
pub fn run_finetune(
    cfg: &ExperimentConfig,
    source: &FinetuneSource,
    seed: u64,
    out_dir: &Path,
) -> Result<FinetuneSummary, HarnessError> {
    cfg.validate()?;
    let task = finetune_task(cfg, seed);
    let target = match task {
        PointMassTask::Target { target, .. } => target,
        _ => unreachable!("finetune task is a target task"),
    };
    let (mut agent, kept) = initial_agent(cfg, source, seed)?;
    let dcfg = agent.config.clone();
    let mut buffer = match kept {
        Some(mut b) => {
            b.relabel_rewards(|next_obs| {
                task.reward(&PointMassState {
                    position: [next_obs[0] as f64, next_obs[1] as f64],
                    velocity: [next_obs[2] as f64, next_obs[3] as f64],
                }) as f32
            });
            b
        }
        None => ReplayBuffer::new(
            dcfg.replay_capacity,
            OBS_DIM,
            ACTION_DIM,
            dcfg.n_step,
            dcfg.gamma as f32,
        )?,
    };
    buffer.start_episode();

    let mut env_rng = stream(seed, streams::ENV);
    let mut act_rng = stream(seed, streams::ACT);
    let mut replay_rng = stream(seed, streams::REPLAY);
    let mut env = PointMassEnv::new(cfg.pointmass(), task);

    let mut rows = vec![FinetuneRow {
        step: 0,
        eval_return: evaluate_policy(&agent.actor, cfg, task, seed)?,
        critic_loss: f64::NAN,
        actor_loss: f64::NAN,
        polter_term: 0.0,
    }];
    let (mut critic_loss, mut actor_loss) = (f64::NAN, f64::NAN);
    let mut state = env.reset(&mut env_rng);
    for t in 0..cfg.finetune_steps {
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
            let d = agent.update(&batch, &batch.inner_reward, None)?;
            critic_loss = d.critic_loss;
            actor_loss = d.actor_loss;
        }
        let done = t + 1;
        if done % cfg.eval_every == 0 || done == cfg.finetune_steps {
            rows.push(FinetuneRow {
                step: done,
                eval_return: evaluate_policy(&agent.actor, cfg, task, seed)?,
                critic_loss,
                actor_loss,
                polter_term: 0.0,
            });
        }
    }

    fs::create_dir_all(out_dir)?;
    cfg.write_resolved(out_dir.join("config.cfg"))?;
    write_csv(&out_dir.join("finetune.csv"), &rows)?;
    let final_return = rows.last().map(|r| r.eval_return).unwrap_or(f64::NAN);
    let summary = FinetuneSummary {
        seed,
        source: match source {
            FinetuneSource::Scratch => "scratch".into(),
            FinetuneSource::Checkpoint { run_dir, step } => {
                format!("{}@{step}", run_dir.display())
            }
        },
        target,
        rows,
        final_return,
        normalized_score: final_return / cfg.expert_return,
    };
    fs::write(
        out_dir.join("finetune.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
