//! Rollout collection over all environment instances and the synchronous
//! parameter update.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{loss_and_grad, n_step_returns, pixel_change, replay_hidden, reward_class, total_loss};
use super::loss::{LossInputs, Losses, ReplaySequence, RewardSample, Segment};
use super::optim::{clip_global_norm, learning_rate, RmsProp};
use super::replay::{ReplayBuffer, Transition};
use super::{TrainConfig, TrainError};
use crate::env::{EnvError, NavEnv, Observation, StepOutcome};
use crate::grid::Action;
use crate::mix_seed;
use crate::nn::{
    core_forward, encode_forward, pixel_control_forward, policy_value_forward, AgentState, Checkpoint,
    CheckpointError, CoreInput, EnvKind, Frame, Params,
};

pub const METRICS_HEADER: &str = "frame,avg_return,avg_episode_length,success_rate,episodes,loss_total,loss_actor,\
loss_critic,loss_entropy,loss_off_policy_critic,loss_pixel_control,loss_reward_prediction,loss_depth,\
loss_observation,loss_target,learning_rate,grad_norm";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub env: usize,
    pub total_reward: f64,
    pub length: usize,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    /// Frame counter after the step.
    pub frame: u64,
    pub losses: Losses,
    pub total: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub learning_rate: f64,
    /// Episodes that ended during the rollout.
    pub episodes: Vec<EpisodeStats>,
}

/// Samples an index from a discrete distribution.
pub(crate) fn sample_action(probs: &[f32], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += *p as f64;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub struct Trainer {
    config: TrainConfig,
    params: Params<f32>,
    optimizer: RmsProp,
    frame: u64,
    kind: EnvKind,
    envs: Vec<Box<dyn NavEnv>>,
    obs: Vec<Observation>,
    state: AgentState<f32>,
    prev_action: Vec<Option<usize>>,
    prev_reward: Vec<f32>,
    /// The next frame of the instance starts an episode.
    fresh: Vec<bool>,
    episode: Vec<u64>,
    ep_reward: Vec<f64>,
    ep_length: Vec<usize>,
    action_rngs: Vec<ChaCha8Rng>,
    sample_rng: ChaCha8Rng,
    buffer: ReplayBuffer,
    max_depth: f32,
}

impl Trainer {
    /// Freshly initialized parameters; the environments must already be
    /// seeded.
    pub fn new(config: TrainConfig, envs: Vec<Box<dyn NavEnv>>, kind: EnvKind) -> Result<Self, TrainError> {
        let params = Params::init(config.network, mix_seed(config.seed, 0x5eed));
        Self::with_params(config, envs, kind, params)
    }

    pub fn with_params(
        config: TrainConfig,
        mut envs: Vec<Box<dyn NavEnv>>,
        kind: EnvKind,
        params: Params<f32>,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if envs.len() != config.instances {
            return Err(TrainError::Config(format!(
                "expected {} environment instances, got {}",
                config.instances,
                envs.len()
            )));
        }
        if params.config != config.network {
            return Err(CheckpointError::ConfigMismatch {
                stored: Box::new(params.config),
                expected: Box::new(config.network),
            }
            .into());
        }
        let b = config.instances;
        let obs: Vec<Observation> = envs.iter_mut().map(|e| e.reset(0)).collect();
        let side = config.network.image_side;
        if obs[0].rgb.shape() != (3, side, side) {
            return Err(TrainError::Config(format!(
                "environment renders {:?} frames but the network expects {side}x{side}",
                obs[0].rgb.shape()
            )));
        }
        let max_depth = envs[0].max_depth();
        Ok(Trainer {
            optimizer: RmsProp::new(&params, config.rmsprop_alpha, config.rmsprop_epsilon),
            state: AgentState::zeros(b, config.network.lstm),
            prev_action: vec![None; b],
            prev_reward: vec![0.0; b],
            fresh: vec![true; b],
            episode: vec![0; b],
            ep_reward: vec![0.0; b],
            ep_length: vec![0; b],
            action_rngs: (0..b).map(|i| ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 100 + i as u64))).collect(),
            sample_rng: ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 99)),
            buffer: ReplayBuffer::new(config.replay_buffer_size),
            frame: 0,
            config,
            params,
            kind,
            envs,
            obs,
            max_depth,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<f32> {
        &self.params
    }

    pub fn optimizer(&self) -> &RmsProp {
        &self.optimizer
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn env_kind(&self) -> EnvKind {
        self.kind
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            optimizer: Some(self.optimizer.mean_square.clone()),
            frame: self.frame,
            env_kind: self.kind,
        }
    }

    /// Loads a checkpoint. One from the same environment kind resumes
    /// training (parameters, optimizer and frame counter); one from the
    /// other kind only initializes the parameters for fine-tuning. Returns
    /// whether training resumed.
    pub fn load_checkpoint(&mut self, ckpt: Checkpoint) -> Result<bool, TrainError> {
        if ckpt.params.config != self.config.network {
            return Err(CheckpointError::ConfigMismatch {
                stored: Box::new(ckpt.params.config),
                expected: Box::new(self.config.network),
            }
            .into());
        }
        let resume = ckpt.env_kind == self.kind;
        self.params = ckpt.params;
        if resume {
            self.frame = ckpt.frame;
            // Restart the episodes under the resumed curriculum stage.
            for (i, env) in self.envs.iter_mut().enumerate() {
                self.obs[i] = env.reset(self.frame);
            }
            match ckpt.optimizer {
                Some(ms) if ms.iter().map(Vec::len).eq(self.params.blocks.iter().map(Vec::len)) => {
                    self.optimizer.mean_square = ms
                }
                _ => log::warn!("checkpoint has no usable optimizer state; starting RMSprop from zero"),
            }
        } else {
            self.optimizer = RmsProp::new(&self.params, self.config.rmsprop_alpha, self.config.rmsprop_epsilon);
        }
        Ok(resume)
    }

    fn step_envs(&mut self, actions: &[usize]) -> Result<Vec<StepOutcome>, EnvError> {
        let act = |a: usize| Action::from_index(a).expect("sampled action in range");
        if self.config.concurrent {
            self.envs.par_iter_mut().zip(actions).map(|(e, a)| e.step(act(*a))).collect()
        } else {
            self.envs.iter_mut().zip(actions).map(|(e, a)| e.step(act(*a))).collect()
        }
    }

    /// Policy and value of the current frames of all instances.
    fn forward_current(&self) -> Result<(Vec<f32>, Vec<f32>, AgentState<f32>), TrainError> {
        let frames: Vec<Frame> = self.obs.iter().map(|o| Frame { obs: &o.rgb, target: &o.target }).collect();
        let enc = encode_forward(&self.params, &frames)?;
        let core = core_forward(
            &self.params,
            &CoreInput {
                steps: 1,
                batch: self.envs.len(),
                emb: &enc.emb,
                prev_action: &self.prev_action,
                prev_reward: &self.prev_reward,
                reset: &self.fresh,
                init: &self.state,
            },
        );
        let pv = policy_value_forward(&self.params, &core.h, self.envs.len());
        Ok((pv.probs, pv.values, core.final_state))
    }

    /// Collects one rollout, pushes it to the replay buffer, and applies one
    /// clipped RMSprop update.
    pub fn train_step(&mut self) -> Result<StepReport, TrainError> {
        let b = self.envs.len();
        let steps = self.config.rollout_length;
        let hw = self.config.network.lstm;
        let a = self.config.network.actions;
        let n = steps * b;
        let init = self.state.clone();
        let mut seg = Segment {
            steps,
            batch: b,
            obs: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            depth: Vec::with_capacity(n),
            prev_action: Vec::with_capacity(n),
            prev_reward: Vec::with_capacity(n),
            reset: Vec::with_capacity(n),
            init,
            actions: Vec::with_capacity(n),
            returns: Vec::new(),
            advantages: Vec::new(),
        };
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut finished = Vec::new();

        for _ in 0..steps {
            let (probs, vals, next_state) = self.forward_current()?;
            let actions: Vec<usize> =
                (0..b).map(|i| sample_action(&probs[i * a..][..a], &mut self.action_rngs[i])).collect();
            let outcomes = self.step_envs(&actions)?;
            for (i, out) in outcomes.into_iter().enumerate() {
                let o = &self.obs[i];
                seg.obs.push(o.rgb.clone());
                seg.targets.push(o.target.clone());
                seg.depth.push(o.depth.clone());
                seg.prev_action.push(self.prev_action[i]);
                seg.prev_reward.push(self.prev_reward[i]);
                seg.reset.push(self.fresh[i]);
                seg.actions.push(actions[i]);
                rewards.push(out.reward as f64);
                dones.push(out.done);
                values.push(vals[i] as f64);

                let input_state =
                    if self.fresh[i] { AgentState::zeros(1, hw) } else { self.state.row(i, hw) };
                self.buffer.push(Transition {
                    env: i,
                    episode: self.episode[i],
                    obs: o.rgb.clone(),
                    target: o.target.clone(),
                    depth: o.depth.clone(),
                    next_obs: out.observation.rgb.clone(),
                    prev_action: self.prev_action[i],
                    prev_reward: self.prev_reward[i],
                    action: actions[i],
                    reward: out.reward,
                    done: out.done,
                    state_h: input_state.h,
                    state_c: input_state.c,
                });
                self.ep_reward[i] += out.reward as f64;
                self.ep_length[i] += 1;
                if out.done {
                    finished.push(EpisodeStats {
                        env: i,
                        total_reward: self.ep_reward[i],
                        length: self.ep_length[i],
                        success: out.info.success,
                    });
                    self.obs[i] = self.envs[i].reset(self.frame);
                    self.fresh[i] = true;
                    self.prev_action[i] = None;
                    self.prev_reward[i] = 0.0;
                    self.episode[i] += 1;
                    self.ep_reward[i] = 0.0;
                    self.ep_length[i] = 0;
                } else {
                    self.obs[i] = out.observation;
                    self.fresh[i] = false;
                    self.prev_action[i] = Some(actions[i]);
                    self.prev_reward[i] = out.reward;
                }
            }
            self.state = next_state;
            for i in 0..b {
                if self.fresh[i] {
                    self.state.reset_row(i, hw);
                }
            }
        }

        let (_, boot, _) = self.forward_current()?;
        seg.returns = vec![0.0; n];
        for i in 0..b {
            let r: Vec<f64> = (0..steps).map(|t| rewards[t * b + i]).collect();
            let d: Vec<bool> = (0..steps).map(|t| dones[t * b + i]).collect();
            for (t, ret) in n_step_returns(&r, boot[i] as f64, &d, self.config.discount).into_iter().enumerate() {
                seg.returns[t * b + i] = ret;
            }
        }
        seg.advantages = seg.returns.iter().zip(&values).map(|(r, v)| r - v).collect();

        let w = self.config.weights;
        let mut inputs = self.sample_aux()?;
        inputs.segment = Some(seg);
        let (losses, grads) = loss_and_grad(&self.params, &inputs, &w, true)?;
        let mut grads = grads.expect("gradient requested");
        for _ in 1..self.config.aux_updates_per_step {
            let extra = self.sample_aux()?;
            let (_, g) = loss_and_grad(&self.params, &extra, &w, true)?;
            grads.add_assign(&g.expect("gradient requested"));
        }

        let total = total_loss(&losses, &w);
        if !losses.all_finite() || !total.is_finite() {
            let detail = Losses::NAMES.iter().zip(losses.values()).map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>();
            return Err(TrainError::NonFinite { what: "loss", frame: self.frame, detail: detail.join(", ") });
        }
        if !grads.all_finite() {
            return Err(TrainError::NonFinite {
                what: "gradient",
                frame: self.frame,
                detail: format!("total loss {total}"),
            });
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.max_gradient_norm);
        let lr = learning_rate(self.frame, self.config.learning_rate, self.config.learning_rate_anneal_frames);
        self.optimizer.step(&mut self.params, &grads, lr as f32);
        self.frame += n as u64;
        Ok(StepReport { frame: self.frame, losses, total, grad_norm, learning_rate: lr, episodes: finished })
    }

    fn sequence(&self, positions: &[usize], boot: Option<usize>) -> ReplaySequence {
        let frames: Vec<&Transition> = positions.iter().chain(boot.iter()).map(|p| self.buffer.get(*p)).collect();
        let first = frames[0];
        ReplaySequence {
            obs: frames.iter().map(|t| t.obs.clone()).collect(),
            targets: frames.iter().map(|t| t.target.clone()).collect(),
            prev_action: frames.iter().map(|t| t.prev_action).collect(),
            prev_reward: frames.iter().map(|t| t.prev_reward).collect(),
            init: AgentState { h: first.state_h.clone(), c: first.state_c.clone() },
            actions: positions.iter().map(|p| self.buffer.get(*p).action).collect(),
            value_returns: None,
            pc_returns: None,
        }
    }

    fn value_replay(&mut self) -> Result<Option<ReplaySequence>, TrainError> {
        let Some((pos, boot)) = self.buffer.sample_sequence(self.config.rollout_length, &mut self.sample_rng) else {
            log::debug!("replay buffer empty; skipping value replay");
            return Ok(None);
        };
        let mut seq = self.sequence(&pos, boot);
        let bootstrap = if boot.is_some() {
            let h = replay_hidden(&self.params, &seq)?;
            let hw = self.config.network.lstm;
            policy_value_forward(&self.params, &h[h.len() - hw..], 1).values[0] as f64
        } else {
            0.0
        };
        let rewards: Vec<f64> = pos.iter().map(|p| self.buffer.get(*p).reward as f64).collect();
        let dones: Vec<bool> = pos.iter().map(|p| self.buffer.get(*p).done).collect();
        seq.value_returns = Some(n_step_returns(&rewards, bootstrap, &dones, self.config.discount));
        Ok(Some(seq))
    }

    fn pixel_replay(&mut self) -> Result<Option<ReplaySequence>, TrainError> {
        let Some((pos, boot)) = self.buffer.sample_sequence(self.config.rollout_length, &mut self.sample_rng) else {
            log::debug!("replay buffer empty; skipping pixel control");
            return Ok(None);
        };
        let cfg = self.config.network;
        let q = cfg.q_side();
        let p = q * q;
        let a = cfg.actions;
        let (cell, _) = cfg.pc_cell();
        let mut seq = self.sequence(&pos, boot);
        let mut running = vec![0.0; p];
        if boot.is_some() {
            let h = replay_hidden(&self.params, &seq)?;
            let qmap = pixel_control_forward(&self.params, &h[h.len() - cfg.lstm..], 1).q;
            for (c, r) in running.iter_mut().enumerate() {
                *r = (0..a).map(|j| qmap[j * p + c] as f64).fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let gamma = self.config.pixel_control_discount;
        let mut rets = vec![0.0; pos.len() * p];
        for (t, &ps) in pos.iter().enumerate().rev() {
            let tr = self.buffer.get(ps);
            let change = pixel_change(&tr.obs, &tr.next_obs, q, cell);
            for c in 0..p {
                running[c] = change[c] + gamma * running[c];
                rets[t * p + c] = running[c];
            }
        }
        seq.pc_returns = Some(rets);
        Ok(Some(seq))
    }

    fn reward_sample(&mut self) -> Option<RewardSample> {
        let [p0, p1, p2] = self.buffer.sample_reward_triple(self.config.reward_prediction_skew, &mut self.sample_rng)?;
        let t = [self.buffer.get(p0), self.buffer.get(p1), self.buffer.get(p2)];
        Some(RewardSample {
            obs: t.map(|x| Arc::clone(&x.obs)),
            targets: t.map(|x| Arc::clone(&x.target)),
            class: reward_class(t[2].reward),
        })
    }

    fn sample_aux(&mut self) -> Result<LossInputs, TrainError> {
        let w = self.config.weights;
        Ok(LossInputs {
            segment: None,
            value_replay: if w.off_policy_critic > 0.0 { self.value_replay()? } else { None },
            pixel_replay: if w.pixel_control > 0.0 { self.pixel_replay()? } else { None },
            reward: if w.reward_prediction > 0.0 {
                (0..self.config.instances).filter_map(|_| self.reward_sample()).collect()
            } else {
                Vec::new()
            },
            max_depth: self.max_depth,
        })
    }
}
