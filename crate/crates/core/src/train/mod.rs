//! Synchronous parallel advantage actor-critic training with value replay
//! and auxiliary tasks.

mod config;
mod loss;
mod optim;
mod replay;
mod run;
mod trainer;

use thiserror::Error;

pub use config::{parse_key_values, TrainConfig};
pub use loss::{
    loss_and_grad, n_step_returns, pixel_change, replay_hidden, reward_class, total_loss, LossInputs, LossWeights,
    Losses, ReplaySequence, RewardSample, Segment,
};
pub use optim::{clip_global_norm, learning_rate, RmsProp};
pub use replay::{ReplayBuffer, Transition};
pub use run::{make_envs, train, EnvSpec, EvalHook, TrainOutcome, TrainRun};
pub use trainer::{EpisodeStats, StepReport, Trainer, METRICS_HEADER};

use crate::env::EnvError;
use crate::nn::{CheckpointError, NetError};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite {what} at frame {frame}: {detail}")]
    NonFinite { what: &'static str, frame: u64, detail: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
