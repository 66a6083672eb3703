use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::nn::Mlp;

/// `run.json`: what a finished run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub kind: String,
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub steps: u64,
    pub checkpoints: Vec<u64>,
    /// `(schedule entry, step taken)` per ensemble member.
    pub snapshots: Vec<(u64, u64)>,
    pub actor_digest: String,
    pub replay_digest: String,
    pub complete: bool,
}

impl RunInfo {
    pub fn read(run_dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(run_dir.join("run.json")).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), HarnessError> {
        fs::write(
            run_dir.join("run.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}

/// One row of `train.csv`. `ensemble_k` counts members contributing to the
/// actor loss (0 when the regularizer is off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub step: u64,
    pub intrinsic_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub polter_term: f64,
    pub ensemble_k: usize,
}

/// One row of `trajectory.csv`: state before the action, the action and the
/// environment reward it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub pos_x: f64,
    pub pos_y: f64,
    pub vel_x: f64,
    pub vel_y: f64,
    pub action_x: f64,
    pub action_y: f64,
    pub reward: f64,
}

pub fn checkpoint_dir(run_dir: &Path, step: u64) -> PathBuf {
    run_dir.join("checkpoints").join(format!("step_{step}"))
}

/// Steps of all stored checkpoints, ascending.
pub fn list_checkpoints(run_dir: &Path) -> Result<Vec<u64>, HarnessError> {
    let dir = run_dir.join("checkpoints");
    let entries = fs::read_dir(&dir).map_err(|_| {
        HarnessError::MissingArtifact(format!("no checkpoints under {}", dir.display()))
    })?;
    let mut steps = Vec::new();
    for e in entries {
        let name = e?.file_name();
        if let Some(step) = name
            .to_str()
            .and_then(|n| n.strip_prefix("step_"))
            .and_then(|s| s.parse().ok())
        {
            steps.push(step);
        }
    }
    steps.sort_unstable();
    Ok(steps)
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|_| HarnessError::MissingArtifact(format!("cannot read {}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Short hex digest of a network's parameter bits.
pub(crate) fn params_digest(net: &Mlp<f32>) -> String {
    let mut h = Sha256::new();
    for p in net.flat_params() {
        h.update(p.to_bits().to_le_bytes());
    }
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub(crate) fn load_actor(path: &Path, what: &str) -> Result<Mlp<f32>, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingArtifact(format!(
            "{what} not found at {}",
            path.display()
        )));
    }
    Ok(Mlp::load(path)?)
}
