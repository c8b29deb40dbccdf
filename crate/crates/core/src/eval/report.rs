use std::fmt::Write as _;

use serde::Serialize;

use super::{EvalError, Policy, StepContext};
use crate::env::NavEnv;
use crate::grid::{goal_distance, shortest_path_length, Action, MotionModel, Pose};
use crate::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Agent,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Motion actions taken (TERMINATE excluded).
    pub steps: usize,
    /// Meters covered by translations that moved the agent.
    pub distance_traveled: f64,
    /// Meters to the nearest goal pose when the episode ended.
    pub goal_distance: f64,
    pub terminated_by: Termination,
    pub total_reward: f64,
    #[serde(skip)]
    pub start: Pose,
    /// Shortest-path length from the start, when reachable.
    pub optimal_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub max_steps: usize,
    pub motion: MotionModel,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_steps: 300, motion: MotionModel::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub goal_distance: Stat,
    /// Over successful episodes only; `None` when there were none.
    pub steps: Option<Stat>,
    pub distance_traveled: Stat,
    pub mean_return: f64,
    pub results: Vec<EpisodeResult>,
}

impl EvalReport {
    pub fn from_results(results: Vec<EpisodeResult>) -> Result<Self, EvalError> {
        if results.is_empty() {
            return Err(EvalError::Empty);
        }
        let col = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).collect::<Vec<f64>>();
        let ok: Vec<f64> = results.iter().filter(|r| r.success).map(|r| r.steps as f64).collect();
        let n = results.len() as f64;
        Ok(EvalReport {
            episodes: results.len(),
            success_rate: results.iter().filter(|r| r.success).count() as f64 / n,
            goal_distance: Stat::of(&col(&|r| r.goal_distance)).expect("non-empty"),
            steps: Stat::of(&ok),
            distance_traveled: Stat::of(&col(&|r| r.distance_traveled)).expect("non-empty"),
            mean_return: col(&|r| r.total_reward).iter().sum::<f64>() / n,
            results,
        })
    }

    pub fn to_table(&self) -> String {
        let pm = |s: Stat| format!("{:.3} ± {:.3}", s.mean, s.std);
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}{}", "episodes", self.episodes);
        let _ = writeln!(out, "{:<22}{:.3}", "success rate", self.success_rate);
        let _ = writeln!(out, "{:<22}{} m", "goal distance", pm(self.goal_distance));
        let steps = self.steps.map(pm).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(out, "{:<22}{steps}", "steps (successes)");
        let _ = writeln!(out, "{:<22}{} m", "distance traveled", pm(self.distance_traveled));
        let _ = writeln!(out, "{:<22}{:.3}", "mean return", self.mean_return);
        out
    }

    pub const CSV_HEADER: &'static str = "label,episodes,success_rate,goal_distance_mean,goal_distance_std,\
steps_mean,steps_std,distance_traveled_mean,distance_traveled_std,mean_return";

    pub fn to_csv_row(&self, label: &str) -> String {
        let (sm, ss) = self.steps.map(|s| (s.mean.to_string(), s.std.to_string())).unwrap_or_default();
        format!(
            "{label},{},{},{},{},{sm},{ss},{},{},{}",
            self.episodes,
            self.success_rate,
            self.goal_distance.mean,
            self.goal_distance.std,
            self.distance_traveled.mean,
            self.distance_traveled.std,
            self.mean_return
        )
    }
}

/// Runs `n_episodes` episodes without curriculum. Episode `i` reseeds the
/// environment and the policy from `(seed, i)`, so the report is a
/// deterministic function of the policy, the environment and `seed`.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &mut dyn NavEnv,
    n_episodes: usize,
    seed: u64,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if n_episodes == 0 {
        return Err(EvalError::Empty);
    }
    if policy.action_count() != Action::COUNT {
        return Err(EvalError::ActionMismatch { policy: policy.action_count(), env: Action::COUNT });
    }
    env.set_curriculum(false);
    let mut results = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let s = mix_seed(seed, i as u64);
        env.reseed(s);
        policy.start_episode(mix_seed(s, 1));
        let mut obs = env.reset(u64::MAX);
        let (start, optimal_steps) = {
            let t = env.ground_truth();
            (t.pose, shortest_path_length(t.pose, t.goals, t.map, cfg.motion)?)
        };
        let res = env.ground_truth().map.resolution();
        let (mut prev_action, mut prev_reward) = (None, 0.0f32);
        let (mut steps, mut actions, mut traveled, mut total_reward) = (0, 0, 0.0, 0.0);
        let mut outcome = None;
        while actions < cfg.max_steps {
            let action = policy.act(&StepContext {
                observation: &obs,
                truth: env.ground_truth(),
                prev_action,
                prev_reward,
            })?;
            let before = env.ground_truth().pose;
            let out = env.step(action)?;
            actions += 1;
            total_reward += out.reward as f64;
            if action != Action::Terminate {
                steps += 1;
            }
            let after = env.ground_truth().pose;
            if action.is_translation() && (after.col, after.row) != (before.col, before.row) {
                traveled += res;
            }
            if out.done {
                let by = if out.info.timeout { Termination::Timeout } else { Termination::Agent };
                outcome = Some((out.info.success, by));
                break;
            }
            obs = out.observation;
            prev_action = Some(action);
            prev_reward = out.reward;
        }
        let (success, terminated_by) = outcome.unwrap_or((false, Termination::Timeout));
        let t = env.ground_truth();
        results.push(EpisodeResult {
            success,
            steps,
            distance_traveled: traveled,
            goal_distance: goal_distance(&t.pose, t.goals, res),
            terminated_by,
            total_reward,
            start,
            optimal_steps,
        });
    }
    EvalReport::from_results(results)
}
