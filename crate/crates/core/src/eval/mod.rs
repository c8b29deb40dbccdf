//! Evaluation protocol, baseline agents, reports and learning-curve plots.

mod agents;
mod plot;
mod report;

use thiserror::Error;

pub use agents::{GreedyAgent, Policy, RandomAgent, ShortestPathAgent, StepContext};
pub use plot::{moving_average, parse_metrics, plot_curves, Curve, MetricsTable};
pub use report::{evaluate, EpisodeResult, EvalConfig, EvalReport, Stat, Termination};

use crate::env::EnvError;
use crate::grid::GridError;
use crate::nn::NetError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty evaluation")]
    Empty,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("policy has {policy} actions but the environment has {env}")]
    ActionMismatch { policy: usize, env: usize },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
}
