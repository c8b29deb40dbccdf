//! Interface shared by the simulated and the dataset-replay environments.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Action, GridMap, Pose};
use crate::image::Image;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("environment has not been reset")]
    NotReset,
}

/// What the agent sees at one step.
#[derive(Debug, Clone)]
pub struct Observation {
    pub rgb: Arc<Image>,
    /// Only present while training; the deployed agent never sees depth.
    pub depth: Option<Arc<Image>>,
    pub target: Arc<Image>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub collided: bool,
    /// TERMINATE was issued while the success predicate held.
    pub success: bool,
    pub timeout: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f32,
    pub done: bool,
    pub info: StepInfo,
}

/// Ground-truth state exposed to the evaluator and the oracle baselines.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub map: &'a GridMap,
    pub pose: Pose,
    pub goals: &'a [Pose],
}

pub trait NavEnv: Send {
    /// Starts a new episode. `frame` is the global training frame counter
    /// (used for curriculum schedules).
    fn reset(&mut self, frame: u64) -> Observation;

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError>;

    /// Reseeds the environment's random stream.
    fn reseed(&mut self, seed: u64);

    /// Whether observations carry depth maps.
    fn has_depth(&self) -> bool;

    fn ground_truth(&self) -> GroundTruth<'_>;

    /// Disables start-distance curriculum (used for evaluation).
    fn set_curriculum(&mut self, _enabled: bool) {}

    /// Upper bound of the depth range, used to normalize depth targets.
    fn max_depth(&self) -> f32;
}
