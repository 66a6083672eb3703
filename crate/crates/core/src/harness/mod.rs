//! Experiment orchestration: pretraining, finetuning, reference policy,
//! evaluation commands, sweeps and the full PointMass reproduction.
//!
//! Every run is a pure function of `(config, seed)`. Randomness is split into
//! independent ChaCha8 streams (network init, environment, acting, replay
//! sampling, evaluation, task draw, probe states), so switching a feature on or
//! off never shifts the random numbers another component sees.

mod config;
mod eval;
mod finetune;
mod io;
mod oracle;
mod pretrain;
pub mod repro;
mod sweep;

pub use config::{parse_overrides, ExperimentConfig};
pub use eval::{
    cmd_entropy, cmd_eval_kl, cmd_histogram, cmd_stats, probe_states, EntropyRow, KlRow,
};
pub use finetune::{
    evaluate_policy, finetune_task, run_finetune, FinetuneRow, FinetuneSource, FinetuneSummary,
};
pub use io::{checkpoint_dir, list_checkpoints, RunInfo, TrainRow, TrajectoryRow};
pub use oracle::{train_oracle, OracleSummary};
pub use pretrain::{run_pretraining, PretrainSummary};
pub use sweep::{run_sweep, SweepKind, SweepSummary};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::AnalysisError;
use crate::ddpg::DdpgError;
use crate::envs::EnvError;
use crate::intrinsic::IntrinsicError;
use crate::nn::NnError;
use crate::polter::PolterError;

#[derive(Debug, Clone, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::MissingArtifact(_) => 4,
            HarnessError::Io(_) | HarnessError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(format!("json: {e}"))
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(format!("csv: {e}"))
    }
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => HarnessError::Numeric(e.to_string()),
            NnError::Io(_) | NnError::Format(_) => HarnessError::Io(e.to_string()),
            _ => HarnessError::Other(e.to_string()),
        }
    }
}

impl From<DdpgError> for HarnessError {
    fn from(e: DdpgError) -> Self {
        if e.is_numeric() {
            return HarnessError::Numeric(e.to_string());
        }
        match e {
            DdpgError::Config(m) => HarnessError::Config(m),
            DdpgError::Io(_) | DdpgError::Json(_) => HarnessError::Io(e.to_string()),
            DdpgError::Nn(n) => n.into(),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

impl From<IntrinsicError> for HarnessError {
    fn from(e: IntrinsicError) -> Self {
        if e.is_numeric() {
            return HarnessError::Numeric(e.to_string());
        }
        match e {
            IntrinsicError::Config(m) => HarnessError::Config(m),
            IntrinsicError::Nn(n) => n.into(),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

impl From<PolterError> for HarnessError {
    fn from(e: PolterError) -> Self {
        match e {
            PolterError::Config(m) | PolterError::Schedule(m) => HarnessError::Config(m),
            PolterError::Nn(n) => n.into(),
            PolterError::Io(_) | PolterError::Json(_) | PolterError::Manifest(_) => {
                HarnessError::Io(e.to_string())
            }
            other => HarnessError::Other(other.to_string()),
        }
    }
}

impl From<AnalysisError> for HarnessError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::MalformedCsv { .. } | AnalysisError::TooFewScores { .. } => {
                HarnessError::Config(e.to_string())
            }
            AnalysisError::Io(m) => HarnessError::Io(m),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::NonFiniteAction => HarnessError::Numeric(e.to_string()),
            other => HarnessError::Other(other.to_string()),
        }
    }
}

/// Independent random streams derived from one run seed.
pub(crate) mod streams {
    pub const AGENT_INIT: u64 = 0;
    pub const INTRINSIC_INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const ACT: u64 = 3;
    pub const REPLAY: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const TASK: u64 = 6;
    pub const PROBES: u64 = 7;
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
