use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::write_csv;
use super::{run_finetune, run_pretraining, ExperimentConfig, FinetuneSource, HarnessError};
use crate::analysis::{mean, standard_error};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepKind {
    /// Regularization strengths, each with its own pretraining runs.
    Alpha(Vec<f64>),
    /// Fractions of pretraining whose checkpoints are finetuned.
    Snapshot(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScore {
    pub setting: String,
    pub seed: u64,
    pub normalized_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub setting: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scores: Vec<SweepScore>,
    pub points: Vec<SweepPoint>,
}

fn checkpoint_at(cfg: &ExperimentConfig, fraction: f64) -> Result<u64, HarnessError> {
    let step = (fraction * cfg.pretrain_steps as f64).round() as u64;
    if step == 0
        || step > cfg.pretrain_steps
        || !step.is_multiple_of(cfg.checkpoint_every) && step != cfg.pretrain_steps
    {
        return Err(HarnessError::Config(format!(
            "fraction {fraction} maps to step {step}, which is not a stored checkpoint"
        )));
    }
    Ok(step)
}

/// Pretrains and finetunes every setting over `cfg.seeds`, writing
/// `sweep.csv` (setting, seed, normalized_return) and `sweep.json` to `out_dir`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    kind: &SweepKind,
    out_dir: &Path,
) -> Result<SweepSummary, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut scores = Vec::new();
    let mut settings = Vec::new();
    let run_dir =
        |label: &str, seed: u64| -> PathBuf { out_dir.join(format!("{label}_seed{seed}")) };
    match kind {
        SweepKind::Alpha(alphas) => {
            for &alpha in alphas {
                let mut c = cfg.clone();
                c.polter = true;
                c.alpha = alpha;
                c.validate()?;
                let setting = format!("alpha={alpha}");
                for &seed in &cfg.seeds {
                    let dir = run_dir(&setting, seed);
                    run_pretraining(&c, seed, &dir)?;
                    let source = FinetuneSource::Checkpoint {
                        run_dir: dir.clone(),
                        step: c.pretrain_steps,
                    };
                    let f = run_finetune(&c, &source, seed, &dir.join("finetune"))?;
                    scores.push(SweepScore {
                        setting: setting.clone(),
                        seed,
                        normalized_return: f.normalized_score,
                    });
                }
                settings.push(setting);
            }
        }
        SweepKind::Snapshot(fractions) => {
            let steps = fractions
                .iter()
                .map(|&f| checkpoint_at(cfg, f))
                .collect::<Result<Vec<_>, _>>()?;
            for &seed in &cfg.seeds {
                let dir = run_dir(&cfg.variant_label(), seed);
                run_pretraining(cfg, seed, &dir)?;
                for &step in &steps {
                    let source = FinetuneSource::Checkpoint {
                        run_dir: dir.clone(),
                        step,
                    };
                    let f =
                        run_finetune(cfg, &source, seed, &dir.join(format!("finetune_{step}")))?;
                    scores.push(SweepScore {
                        setting: format!("step={step}"),
                        seed,
                        normalized_return: f.normalized_score,
                    });
                }
            }
            settings = steps.iter().map(|s| format!("step={s}")).collect();
        }
    }
    let points = settings
        .iter()
        .map(|s| {
            let v: Vec<f64> = scores
                .iter()
                .filter(|r| &r.setting == s)
                .map(|r| r.normalized_return)
                .collect();
            Ok(SweepPoint {
                setting: s.clone(),
                mean: mean(&v)?,
                stderr: standard_error(&v),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    write_csv(&out_dir.join("sweep.csv"), &scores)?;
    let summary = SweepSummary { scores, points };
    std::fs::write(
        out_dir.join("sweep.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
