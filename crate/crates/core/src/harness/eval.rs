use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{
    checkpoint_dir, list_checkpoints, load_actor, read_csv, write_csv, RunInfo, TrajectoryRow,
};
use super::pretrain::entropy_windows;
use super::{stream, streams, ExperimentConfig, HarnessError};
use crate::analysis::{
    joint_histogram, per_state_policy_kl, standard_error, state_visitation_entropy, summarize,
    HistogramBounds, RunMatrix, StatReport,
};
use crate::envs::{PointMassState, OBS_DIM};
use crate::nn::{Matrix, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub step: u64,
    pub kl_mean: f64,
    pub kl_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub fraction: f64,
    pub step: u64,
    pub states: usize,
    /// Joint (position, velocity) histogram entropy in nats.
    pub entropy: f64,
    pub position_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistogramRow {
    plane: String,
    i: usize,
    j: usize,
    x_low: f64,
    x_high: f64,
    y_low: f64,
    y_high: f64,
    count: u64,
}

fn run_context(run_dir: &Path) -> Result<(ExperimentConfig, RunInfo), HarnessError> {
    let info = RunInfo::read(run_dir).ok_or_else(|| {
        HarnessError::MissingArtifact(format!("no run.json in {}", run_dir.display()))
    })?;
    let cfg = ExperimentConfig::from_file(run_dir.join("config.cfg"))?;
    Ok((cfg, info))
}

/// Start states drawn from the reset distribution, seeded per run.
pub fn probe_states(cfg: &ExperimentConfig, seed: u64) -> Matrix<f32> {
    let mut rng = stream(seed, streams::PROBES);
    let rows: Vec<[f32; OBS_DIM]> = (0..cfg.kl_probes)
        .map(|_| PointMassState::sample(&mut rng).observation())
        .collect();
    Matrix::from_rows(&rows).expect("fixed-width rows")
}

/// KL of every stored checkpoint's actor to `reference` on the run's probe
/// states. Writes `kl.csv` into the run directory.
pub fn cmd_eval_kl(run_dir: &Path, reference: &Path) -> Result<Vec<KlRow>, HarnessError> {
    if !reference.exists() {
        return Err(HarnessError::MissingArtifact(format!(
            "reference actor {} not found; create it with `polter train-oracle`",
            reference.display()
        )));
    }
    let reference = load_actor(reference, "reference actor")?;
    let (cfg, info) = run_context(run_dir)?;
    let probes = probe_states(&cfg, info.seed);
    let mut rows = Vec::new();
    for step in list_checkpoints(run_dir)? {
        let actor = load_actor(
            &checkpoint_dir(run_dir, step).join("actor.bin"),
            "checkpoint actor",
        )?;
        rows.push(kl_row(step, &reference, &actor, &probes, cfg.polter_sigma)?);
    }
    write_csv(&run_dir.join("kl.csv"), &rows)?;
    Ok(rows)
}

pub(crate) fn kl_row(
    step: u64,
    reference: &Mlp<f32>,
    actor: &Mlp<f32>,
    probes: &Matrix<f32>,
    sigma: f64,
) -> Result<KlRow, HarnessError> {
    let v = per_state_policy_kl(reference, actor, probes, sigma)?;
    Ok(KlRow {
        step,
        kl_mean: v.iter().sum::<f64>() / v.len() as f64,
        kl_stderr: standard_error(&v),
    })
}

fn load_states(run_dir: &Path) -> Result<Vec<TrajectoryRow>, HarnessError> {
    let path = run_dir.join("trajectory.csv");
    if !path.exists() {
        return Err(HarnessError::MissingArtifact(format!(
            "{} has no trajectory dump; pretrain with trajectory_dump = windows or all",
            run_dir.display()
        )));
    }
    read_csv(&path)
}

/// Visitation entropy over the `entropy_window` states preceding each
/// checkpoint fraction of pretraining. Writes `entropy.csv`.
pub fn cmd_entropy(run_dir: &Path) -> Result<Vec<EntropyRow>, HarnessError> {
    let (cfg, _) = run_context(run_dir)?;
    let traj = load_states(run_dir)?;
    let v = cfg.max_speed;
    let joint = HistogramBounds::new(vec![-1.0, -1.0, -v, -v], vec![1.0, 1.0, v, v])?;
    let plane = HistogramBounds::symmetric_unit(2);
    let mut rows = Vec::new();
    for (fraction, lo, hi) in entropy_windows(&cfg) {
        let states: Vec<[f64; 4]> = traj
            .iter()
            .filter(|r| r.step >= lo && r.step < hi)
            .map(|r| [r.pos_x, r.pos_y, r.vel_x, r.vel_y])
            .collect();
        let need = (hi - lo) as usize;
        if states.len() < need {
            return Err(HarnessError::MissingArtifact(format!(
                "entropy at step {hi} needs {need} stored states in [{lo}, {hi}), found {}",
                states.len()
            )));
        }
        let pos: Vec<[f64; 2]> = states.iter().map(|s| [s[0], s[1]]).collect();
        rows.push(EntropyRow {
            fraction,
            step: hi,
            states: states.len(),
            entropy: state_visitation_entropy(&states, &joint, cfg.entropy_bins)?,
            position_entropy: state_visitation_entropy(&pos, &plane, cfg.entropy_bins)?,
        });
    }
    write_csv(&run_dir.join("entropy.csv"), &rows)?;
    Ok(rows)
}

/// Position and velocity histograms of every dumped state, `bins²` cells
/// per plane. Writes `histogram.csv` and returns the number of rows.
pub fn cmd_histogram(run_dir: &Path) -> Result<usize, HarnessError> {
    let (cfg, _) = run_context(run_dir)?;
    let traj = load_states(run_dir)?;
    if traj.is_empty() {
        return Err(HarnessError::MissingArtifact(
            "trajectory dump holds no states".into(),
        ));
    }
    let n = cfg.entropy_bins;
    let v = cfg.max_speed;
    let mut rows = Vec::with_capacity(2 * n * n);
    let planes: [(&str, f64, Vec<[f64; 2]>); 2] = [
        (
            "position",
            1.0,
            traj.iter().map(|r| [r.pos_x, r.pos_y]).collect(),
        ),
        (
            "velocity",
            v,
            traj.iter().map(|r| [r.vel_x, r.vel_y]).collect(),
        ),
    ];
    for (name, half, pts) in planes {
        let bounds = HistogramBounds::new(vec![-half; 2], vec![half; 2])?;
        let counts = joint_histogram(&pts, &bounds, n)?;
        let w = 2.0 * half / n as f64;
        for i in 0..n {
            for j in 0..n {
                rows.push(HistogramRow {
                    plane: name.into(),
                    i,
                    j,
                    x_low: -half + w * i as f64,
                    x_high: -half + w * (i + 1) as f64,
                    y_low: -half + w * j as f64,
                    y_high: -half + w * (j + 1) as f64,
                    count: counts[i * n + j],
                });
            }
        }
    }
    write_csv(&run_dir.join("histogram.csv"), &rows)?;
    Ok(rows.len())
}

/// IQM, mean, median and optimality gap with 95% bootstrap intervals
/// (2000 stratified resamples) for a `task,seed,normalized_return` CSV.
/// The JSON report goes to `out` when given.
pub fn cmd_stats(csv_path: &Path, out: Option<&Path>) -> Result<Vec<StatReport>, HarnessError> {
    let file = fs::File::open(csv_path).map_err(|_| {
        HarnessError::MissingArtifact(format!("run matrix {} not found", csv_path.display()))
    })?;
    let matrix = RunMatrix::read_csv(file)?;
    let report = summarize(&matrix, 2000, 0.95, 0)?;
    if let Some(out) = out {
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}
