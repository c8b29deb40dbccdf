//! Procedurally generated office rooms used for pre-training.
//!
//! A room layout is kept for a window of episodes (50 by default) before a
//! new one is generated; within a window only the start pose and target
//! object are reshuffled.

pub mod layout;
pub mod render;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{generate_layout, LayoutConfig, ObjectClass, PlacedObject, RoomLayout};
pub use render::{render, render_camera, Camera, RenderConfig};

use crate::env::{EnvError, GroundTruth, NavEnv, Observation, StepInfo, StepOutcome};
use crate::grid::{apply_action, success_any, Action, GridError, MotionModel, Pose};
use crate::image::Image;
use crate::mix_seed;

/// Reward for stopping at the target.
pub const REWARD_GOAL: f32 = 1.0;
/// Reward for stopping in front of an object of another class, and for
/// running out of steps.
pub const REWARD_WRONG_STOP: f32 = -0.1;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("a {width}x{height} room fits only {placed} of {wanted} objects")]
    Infeasible { width: usize, height: usize, wanted: usize, placed: usize },
    #[error("no object in the layout can be approached")]
    NoTarget,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub layout: LayoutConfig,
    pub render: RenderConfig,
    /// Episodes per generated layout.
    pub layout_reuse: u64,
    pub max_episode_steps: usize,
    pub motion: MotionModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            layout: LayoutConfig::default(),
            render: RenderConfig::default(),
            layout_reuse: 50,
            max_episode_steps: 300,
            motion: MotionModel::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TargetSelection {
    pub object: usize,
    pub goal_poses: Vec<Pose>,
    /// Pose the target image was taken from (one of `goal_poses`).
    pub view: Pose,
    pub image: Image,
}

/// Picks a target object uniformly among the approachable ones and renders
/// the target image from one of its goal poses.
pub fn select_target(layout: &RoomLayout, cfg: &RenderConfig, rng: &mut impl Rng) -> Result<TargetSelection, SimError> {
    let eligible: Vec<(usize, Vec<Pose>)> = (0..layout.objects.len())
        .map(|i| (i, layout.goal_poses(i)))
        .filter(|(_, g)| !g.is_empty())
        .collect();
    let (object, goal_poses) = eligible.choose(rng).cloned().ok_or(SimError::NoTarget)?;
    let view = *goal_poses.choose(rng).expect("eligible objects have goal poses");
    let (image, _) = render(layout, &view, cfg)?;
    Ok(TargetSelection { object, goal_poses, view, image })
}

#[derive(Debug, Clone)]
pub struct SimEpisodeState {
    pub layout: Arc<RoomLayout>,
    pub agent: Pose,
    pub target_object: usize,
    pub goal_poses: Vec<Pose>,
    pub target_image: Arc<Image>,
    pub steps_taken: usize,
    pub done: bool,
}

pub struct SimEnv {
    config: SimConfig,
    seed: u64,
    rng: ChaCha8Rng,
    episodes: u64,
    window: Option<(u64, Arc<RoomLayout>)>,
    state: Option<SimEpisodeState>,
    frame: Option<(Arc<Image>, Arc<Image>)>,
}

impl SimEnv {
    pub fn new(config: SimConfig, seed: u64) -> Result<Self, SimError> {
        if config.layout_reuse == 0 {
            return Err(SimError::BadConfig("layout_reuse must be positive".into()));
        }
        if config.max_episode_steps == 0 {
            return Err(SimError::BadConfig("max_episode_steps must be positive".into()));
        }
        // Surface infeasible layout configs up front.
        generate_layout(mix_seed(seed, 0), &config.layout)?;
        Ok(SimEnv {
            config,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episodes: 0,
            window: None,
            state: None,
            frame: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&SimEpisodeState> {
        self.state.as_ref()
    }

    fn layout_for(&mut self, window: u64) -> Arc<RoomLayout> {
        if let Some((w, layout)) = &self.window {
            if *w == window {
                return layout.clone();
            }
        }
        let mut attempt = 0u64;
        let layout = loop {
            match generate_layout(mix_seed(self.seed, window.wrapping_mul(1 << 20) + attempt), &self.config.layout) {
                Ok(l) => break Arc::new(l),
                Err(e) if attempt < 100 => {
                    log::debug!("layout generation failed ({e}); retrying");
                    attempt += 1;
                }
                Err(e) => panic!("cannot generate a layout: {e}"),
            }
        };
        self.window = Some((window, layout.clone()));
        layout
    }

    /// Starts episode number `counter`. The layout changes only when the
    /// counter crosses a multiple of the reuse window.
    pub fn reset_episode(&mut self, counter: u64) -> Observation {
        let layout = self.layout_for(counter / self.config.layout_reuse);
        let res = layout.map.resolution();
        let target = select_target(&layout, &self.config.render, &mut self.rng).expect("layouts always hold a target");
        let starts: Vec<Pose> =
            layout.map.free_poses().into_iter().filter(|p| !success_any(p, &target.goal_poses, res)).collect();
        let agent = *starts.choose(&mut self.rng).expect("some pose is outside the success region");
        self.state = Some(SimEpisodeState {
            layout,
            agent,
            target_object: target.object,
            goal_poses: target.goal_poses,
            target_image: Arc::new(target.image),
            steps_taken: 0,
            done: false,
        });
        self.frame = None;
        self.observe()
    }

    fn observe(&mut self) -> Observation {
        let st = self.state.as_ref().expect("state exists");
        let (rgb, depth) = match &self.frame {
            Some(f) => f.clone(),
            None => {
                let (rgb, depth) = render(&st.layout, &st.agent, &self.config.render).expect("agent stays on free cells");
                let f = (Arc::new(rgb), Arc::new(depth));
                self.frame = Some(f.clone());
                f
            }
        };
        Observation { rgb, depth: Some(depth), target: st.target_image.clone() }
    }
}

impl NavEnv for SimEnv {
    fn reset(&mut self, _frame: u64) -> Observation {
        let counter = self.episodes;
        self.episodes += 1;
        self.reset_episode(counter)
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        let motion = self.config.motion;
        let max_steps = self.config.max_episode_steps;
        let st = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if st.done {
            return Err(EnvError::EpisodeFinished);
        }
        st.steps_taken += 1;
        let res = st.layout.map.resolution();
        let mut info = StepInfo::default();
        let mut reward = 0.0;
        match action {
            Action::Terminate => {
                if success_any(&st.agent, &st.goal_poses, res) {
                    reward = REWARD_GOAL;
                    info.success = true;
                    st.done = true;
                } else if let Some(j) = st.layout.faced_object(&st.agent) {
                    let target_class = st.layout.objects[st.target_object].class;
                    if j != st.target_object && st.layout.objects[j].class != target_class {
                        reward = REWARD_WRONG_STOP;
                    }
                }
            }
            Action::MoveBackward if !motion.allow_backward => {}
            motion_action => {
                let (next, collided) = apply_action(st.agent, motion_action, &st.layout.map).expect("agent pose is valid");
                info.collided = collided;
                if next != st.agent {
                    st.agent = next;
                    self.frame = None;
                }
            }
        }
        if !st.done && st.steps_taken >= max_steps {
            st.done = true;
            info.timeout = true;
            reward = REWARD_WRONG_STOP;
        }
        let done = st.done;
        Ok(StepOutcome { observation: self.observe(), reward, done, info })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn has_depth(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> GroundTruth<'_> {
        let st = self.state.as_ref().expect("environment has been reset");
        GroundTruth { map: &st.layout.map, pose: st.agent, goals: &st.goal_poses }
    }

    fn max_depth(&self) -> f32 {
        self.config.render.max_depth_m as f32
    }
}
