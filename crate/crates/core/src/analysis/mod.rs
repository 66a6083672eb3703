//! Exact tabular oracles and evaluation statistics.
//!
//! The tabular side computes occupancy measures, regret and information cost,
//! and the trajectory-level KL chain rule on finite MDPs, all in `f64`. The
//! statistical side covers policy KL on probe states, histogram entropy of
//! visited states, and IQM/bootstrap aggregates over run matrices.

mod divergence;
mod entropy;
mod objective;
mod occupancy;
mod policy_kl;
mod stats;

pub use divergence::{entropy, expected_log, kl_chain_decomposition, kl_divergence, KlChain};
pub use entropy::{joint_histogram, state_visitation_entropy, HistogramBounds};
pub use objective::{
    adaptation_objective, minimize_adaptation_objective, optimal_return, simplex_grid,
    AdaptationObjective,
};
pub use occupancy::{
    occupancy, policy_transition, state_marginals, value_iteration, OccupancyMeasure,
};
pub use policy_kl::{empirical_policy_kl, per_state_policy_kl};
pub use stats::{
    bootstrap_ci, iqm, mean, median, optimality_gap, standard_error, summarize, ConfidenceInterval,
    RunMatrix, StatReport, Statistic,
};

use crate::envs::EnvError;
use crate::nn::NnError;

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalysisError {
    #[error("infinite KL divergence: {detail}")]
    InfiniteKl { detail: String },
    #[error("KL chain rule violated, residual {residual:e}")]
    ChainRule { residual: f64 },
    #[error("occupancy system is singular")]
    Singular,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("need at least {need} scores, got {got}")]
    TooFewScores { need: usize, got: usize },
    #[error("shape: {0}")]
    Shape(String),
    #[error("malformed CSV at line {line}: {detail}")]
    MalformedCsv { line: usize, detail: String },
    #[error("{0}")]
    Env(String),
    #[error("{0}")]
    Nn(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<EnvError> for AnalysisError {
    fn from(e: EnvError) -> Self {
        AnalysisError::Env(e.to_string())
    }
}

impl From<NnError> for AnalysisError {
    fn from(e: NnError) -> Self {
        AnalysisError::Nn(e.to_string())
    }
}

impl From<std::io::Error> for AnalysisError {
    fn from(e: std::io::Error) -> Self {
        AnalysisError::Io(e.to_string())
    }
}
