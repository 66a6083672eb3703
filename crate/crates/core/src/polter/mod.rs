//! Snapshot-ensemble regularization of the pretraining actor.
//!
//! Actor copies taken on a geometric schedule form a uniform mixture; during
//! pretraining the actor loss gains `alpha ×` a KL-style distance from that
//! mixture to the current actor, where each deterministic actor is read as a
//! Gaussian with std `sigma`.

mod ensemble;
mod schedule;
mod term;

pub use ensemble::{maybe_snapshot, EnsembleMember, EnsemblePolicy};
pub use schedule::{ScheduleCursor, SnapshotSchedule};
pub use term::{
    polter_action_term, polter_term, regularized_actor_update, KlMode, PolterConfig,
    PolterRegularizer, PolterTerm,
};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum PolterError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("ensemble manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Benchmark domain family for the tuned-`alpha` presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Locomotion,
    Manipulation,
}

/// Tuned regularization strengths reported for larger benchmark domains.
/// Documentation only; PointMass runs use the default `alpha = 1`.
pub fn tuned_alpha(algorithm: &str, domain: Domain) -> Option<f64> {
    let (loco, manip) = match algorithm.to_ascii_lowercase().as_str() {
        "protorl" => (1.0, 2.0),
        "rnd" => (2.0, 8.0),
        "cic" => (0.0, 4.0),
        _ => return None,
    };
    Some(match domain {
        Domain::Locomotion => loco,
        Domain::Manipulation => manip,
    })
}
