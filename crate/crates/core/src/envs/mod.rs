//! The continuous point-mass domain and finite tabular MDPs.

mod pointmass;
mod tabular;

pub use pointmass::{
    pointmass_reset, pointmass_step, PointMassConfig, PointMassEnv, PointMassState, PointMassTask,
    StepOutcome, ACTION_DIM, OBS_DIM,
};
pub use tabular::{sample_categorical, tabular_rollout, tabular_step, TabularMdp, TabularPolicy};

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid policy at state {state}: {detail}")]
    InvalidPolicy { state: usize, detail: String },
}
