use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::env::{GroundTruth, Observation};
use crate::grid::{shortest_path, success_any, Action, MotionModel};
use crate::nn::{core_step, encode, policy_value, AgentState, Params};

/// What a policy sees at one step. Learned agents use only the
/// observation and the previous action and reward; the baselines read the
/// ground truth.
pub struct StepContext<'a> {
    pub observation: &'a Observation,
    pub truth: GroundTruth<'a>,
    pub prev_action: Option<Action>,
    pub prev_reward: f32,
}

pub trait Policy {
    fn action_count(&self) -> usize {
        Action::COUNT
    }

    fn start_episode(&mut self, seed: u64);

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, EvalError>;
}

/// Uniform over motion actions; signals the goal from ground truth.
pub struct RandomAgent {
    motions: Vec<Action>,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(motion: MotionModel) -> Self {
        RandomAgent { motions: motion.motions(), rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Policy for RandomAgent {
    fn start_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, EvalError> {
        let t = &ctx.truth;
        if success_any(&t.pose, t.goals, t.map.resolution()) {
            return Ok(Action::Terminate);
        }
        Ok(*self.motions.choose(&mut self.rng).expect("at least one motion"))
    }
}

/// Follows a BFS-optimal path and terminates on arrival. Terminates at once
/// when the goal is unreachable.
pub struct ShortestPathAgent {
    motion: MotionModel,
}

impl ShortestPathAgent {
    pub fn new(motion: MotionModel) -> Self {
        ShortestPathAgent { motion }
    }
}

impl Policy for ShortestPathAgent {
    fn start_episode(&mut self, _seed: u64) {}

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, EvalError> {
        let t = &ctx.truth;
        let path = shortest_path(t.pose, t.goals, t.map, self.motion)?;
        Ok(path.and_then(|p| p.first().copied()).unwrap_or(Action::Terminate))
    }
}

/// Trained network acting greedily; ties go to the lowest action index.
pub struct GreedyAgent {
    params: Params<f32>,
    state: AgentState<f32>,
}

impl GreedyAgent {
    pub fn new(params: Params<f32>) -> Self {
        let state = AgentState::zeros(1, params.config.lstm);
        GreedyAgent { params, state }
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }
}

pub(crate) fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

impl Policy for GreedyAgent {
    fn action_count(&self) -> usize {
        self.params.config.actions
    }

    fn start_episode(&mut self, _seed: u64) {
        self.state = AgentState::zeros(1, self.params.config.lstm);
    }

    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, EvalError> {
        let obs = ctx.observation;
        let emb = encode(&self.params, &obs.rgb, &obs.target)?;
        let (h, next) = core_step(&self.params, &emb, ctx.prev_action.map(Action::index), ctx.prev_reward, &self.state);
        self.state = next;
        let (probs, _) = policy_value(&self.params, &h);
        Ok(Action::from_index(argmax(&probs)).expect("policy width matches the action set"))
    }
}
