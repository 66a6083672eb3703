//! Off-policy actor-critic agent (DDPG) with n-step targets.
//!
//! The agent owns an actor `μ(s)`, a critic `Q(s, a)`, their EMA targets and
//! one Adam state each. Losses live in [`losses`] and are generic over the
//! scalar type; the agent runs them in `f32`.

mod agent;
pub mod losses;
mod replay;

pub use agent::{ActorRegularizer, DdpgAgent, DdpgConfig, UpdateDiagnostics};
pub use losses::{actor_loss, actor_pass, critic_loss, td_targets, ActorPass, CriticLoss};
pub use replay::{NStepBatch, ReplayBuffer, Transition};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DdpgError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite TD target at batch row {index}")]
    NonFiniteTarget { index: usize },
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("replay: {0}")]
    Replay(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("regularizer: {0}")]
    Regularizer(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DdpgError {
    /// True for NaN/∞ failures (as opposed to configuration or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            DdpgError::NonFiniteTarget { .. }
                | DdpgError::NonFiniteLoss(_)
                | DdpgError::Nn(NnError::NonFinite { .. })
        )
    }
}
