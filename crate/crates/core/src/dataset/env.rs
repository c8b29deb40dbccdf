//! Dataset-replay environment: grid dynamics over stored images.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{curriculum_max_length, CurriculumSchedule, GridDataset};
use crate::env::{EnvError, GroundTruth, NavEnv, Observation, StepInfo, StepOutcome};
use crate::grid::{apply_action, distance_table, success, Action, MotionModel, Pose};
use crate::image::Image;

/// Reward for stopping within the success region of the goal.
pub const REWARD_GOAL: f32 = 1.0;
/// Reward for attempting to move into a wall or object.
pub const REWARD_COLLISION: f32 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetEnvConfig {
    pub max_episode_steps: usize,
    pub motion: MotionModel,
    /// Frame at which the curriculum starts growing.
    pub curriculum_start_frame: u64,
    /// Frame at which the full path length is reached.
    pub curriculum_end_frame: u64,
    pub curriculum_start_length: usize,
}

impl Default for DatasetEnvConfig {
    fn default() -> Self {
        DatasetEnvConfig {
            max_episode_steps: 300,
            motion: MotionModel::default(),
            curriculum_start_frame: 500_000,
            curriculum_end_frame: 5_000_000,
            curriculum_start_length: 3,
        }
    }
}

/// A dataset together with shortest-path tables to each goal pose.
/// Immutable and shared between environment instances.
#[derive(Debug)]
pub struct DatasetTask {
    pub data: Arc<GridDataset>,
    /// `distances[g][pose_index]`: motion actions from a pose to goal `g`.
    distances: Vec<Vec<Option<usize>>>,
    diameter: usize,
    motion: MotionModel,
}

impl DatasetTask {
    pub fn new(data: Arc<GridDataset>, motion: MotionModel) -> Self {
        let distances: Vec<_> = data.goal_poses().iter().map(|g| distance_table(&[*g], data.map(), motion)).collect();
        let diameter = distances.iter().flatten().flatten().copied().max().unwrap_or(0);
        DatasetTask { data, distances, diameter, motion }
    }

    /// Longest finite shortest-path length from any pose to any goal.
    pub fn diameter(&self) -> usize {
        self.diameter
    }

    pub fn distance(&self, goal_index: usize, pose: &Pose) -> Option<usize> {
        self.distances[goal_index][self.data.map().pose_index(pose)]
    }

    pub fn motion(&self) -> MotionModel {
        self.motion
    }
}

#[derive(Debug, Clone)]
struct Episode {
    pose: Pose,
    goal: [Pose; 1],
    target: Arc<Image>,
    steps: usize,
    done: bool,
}

pub struct DatasetEnv {
    task: Arc<DatasetTask>,
    config: DatasetEnvConfig,
    rng: ChaCha8Rng,
    curriculum: bool,
    episode: Option<Episode>,
}

impl DatasetEnv {
    pub fn new(task: Arc<DatasetTask>, config: DatasetEnvConfig, seed: u64) -> Self {
        DatasetEnv { task, config, rng: ChaCha8Rng::seed_from_u64(seed), curriculum: true, episode: None }
    }

    pub fn schedule(&self) -> CurriculumSchedule {
        CurriculumSchedule {
            start_frame: self.config.curriculum_start_frame,
            end_frame: self.config.curriculum_end_frame,
            start_length: self.config.curriculum_start_length,
            end_length: self.task.diameter(),
        }
    }

    pub fn task(&self) -> &Arc<DatasetTask> {
        &self.task
    }

    fn sample_observation(&mut self, pose: &Pose, target: &Arc<Image>) -> Observation {
        let data = &self.task.data;
        let k = *data.record_indices(pose).choose(&mut self.rng).expect("every free pose has records");
        let rec = &data.records()[k];
        Observation { rgb: rec.rgb.clone(), depth: Some(rec.depth.clone()), target: target.clone() }
    }

    /// Samples a goal and a start pose whose distance to the goal lies in
    /// `[1, max_len]`. When no start satisfies the bound it is relaxed to the
    /// nearest feasible one.
    fn sample_start(&mut self, goal_index: usize, max_len: usize) -> Pose {
        let task = self.task.clone();
        let free = task.data.map().free_poses();
        let dist = |p: &Pose| task.distance(goal_index, p);
        let mut starts: Vec<Pose> = free.iter().copied().filter(|p| matches!(dist(p), Some(d) if d >= 1 && d <= max_len)).collect();
        if starts.is_empty() {
            let nearest = free.iter().filter_map(dist).filter(|&d| d >= 1).min().expect("goal must be reachable from somewhere");
            log::warn!("no start within {max_len} actions of the goal; relaxing to {nearest}");
            starts = free.iter().copied().filter(|p| dist(p) == Some(nearest)).collect();
        }
        *starts.choose(&mut self.rng).expect("non-empty")
    }
}

impl NavEnv for DatasetEnv {
    fn reset(&mut self, frame: u64) -> Observation {
        let data = self.task.data.clone();
        let goal_index = self.rng.gen_range(0..data.goal_poses().len());
        let goal = data.goal_poses()[goal_index];
        let max_len = if self.curriculum { curriculum_max_length(frame, &self.schedule()) } else { usize::MAX };
        let pose = self.sample_start(goal_index, max_len);
        let k = *data.record_indices(&goal).choose(&mut self.rng).expect("goal pose has records");
        let target = data.records()[k].rgb.clone();
        let obs = self.sample_observation(&pose, &target);
        self.episode = Some(Episode { pose, goal: [goal], target, steps: 0, done: false });
        obs
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let motion = self.config.motion;
        let max_steps = self.config.max_episode_steps;
        let task = self.task.clone();
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeFinished);
        }
        ep.steps += 1;
        let mut info = StepInfo::default();
        let mut reward = 0.0;
        match action {
            Action::Terminate => {
                ep.done = true;
                if success(&ep.pose, &ep.goal[0], task.data.map().resolution()) {
                    reward = REWARD_GOAL;
                    info.success = true;
                }
            }
            Action::MoveBackward if !motion.allow_backward => {}
            motion_action => {
                let (next, collided) = apply_action(ep.pose, motion_action, task.data.map()).expect("valid pose");
                ep.pose = next;
                info.collided = collided;
                if collided {
                    reward = REWARD_COLLISION;
                }
            }
        }
        if !ep.done && ep.steps >= max_steps {
            ep.done = true;
            info.timeout = true;
        }
        let (pose, target, done) = (ep.pose, ep.target.clone(), ep.done);
        let observation = self.sample_observation(&pose, &target);
        Ok(StepOutcome { observation, reward, done, info })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn has_depth(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> GroundTruth<'_> {
        let ep = self.episode.as_ref().expect("environment has been reset");
        GroundTruth { map: self.task.data.map(), pose: ep.pose, goals: &ep.goal }
    }

    fn set_curriculum(&mut self, enabled: bool) {
        self.curriculum = enabled;
    }

    fn max_depth(&self) -> f32 {
        self.task.data.max_depth() as f32
    }
}
