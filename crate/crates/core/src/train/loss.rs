//! Loss terms and their gradients. Every regression target (returns,
//! advantages, pixel-control Q targets) is precomputed and frozen, so the
//! total loss is a pure function of the parameters.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::nn::{
    core_backward, core_forward, encode_backward, encode_forward, pixel_control_backward, pixel_control_forward,
    policy_value_backward, policy_value_forward, reconstruct_backward, reconstruct_forward, reward_prediction_backward,
    reward_prediction_forward, AgentState, CoreInput, Frame, NetError, Params, Real, ReconHead,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub entropy: f64,
    pub actor: f64,
    pub critic: f64,
    pub off_policy_critic: f64,
    pub pixel_control: f64,
    pub reward_prediction: f64,
    pub depth: f64,
    pub observation: f64,
    pub target: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            entropy: 0.001,
            actor: 1.0,
            critic: 0.5,
            off_policy_critic: 1.0,
            pixel_control: 0.05,
            reward_prediction: 1.0,
            depth: 0.1,
            observation: 0.1,
            target: 0.1,
        }
    }
}

impl LossWeights {
    /// Actor-critic only: every auxiliary weight zero.
    pub fn paac_only() -> Self {
        LossWeights { pixel_control: 0.0, reward_prediction: 0.0, depth: 0.0, observation: 0.0, target: 0.0, ..Self::default() }
    }

    pub fn values(&self) -> [f64; 9] {
        [
            self.actor,
            self.critic,
            self.entropy,
            self.off_policy_critic,
            self.pixel_control,
            self.reward_prediction,
            self.depth,
            self.observation,
            self.target,
        ]
    }

    pub fn all_nonnegative(&self) -> bool {
        self.values().iter().all(|w| *w >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
    pub off_policy_critic: f64,
    pub pixel_control: f64,
    pub reward_prediction: f64,
    pub depth: f64,
    pub observation: f64,
    pub target: f64,
}

impl Losses {
    pub const NAMES: [&'static str; 9] = [
        "actor",
        "critic",
        "entropy",
        "off_policy_critic",
        "pixel_control",
        "reward_prediction",
        "depth",
        "observation",
        "target",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.actor,
            self.critic,
            self.entropy,
            self.off_policy_critic,
            self.pixel_control,
            self.reward_prediction,
            self.depth,
            self.observation,
            self.target,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Weighted sum; the entropy enters as a bonus.
pub fn total_loss(l: &Losses, w: &LossWeights) -> f64 {
    w.actor * l.actor + w.critic * l.critic - w.entropy * l.entropy
        + w.off_policy_critic * l.off_policy_critic
        + w.pixel_control * l.pixel_control
        + w.reward_prediction * l.reward_prediction
        + w.depth * l.depth
        + w.observation * l.observation
        + w.target * l.target
}

/// Discounted returns `R_t = r_t + gamma * R_{t+1}`, with `R` after the last
/// step equal to `bootstrap` and the recursion cut after `done` steps.
pub fn n_step_returns(rewards: &[f64], bootstrap: f64, dones: &[bool], gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len(), "rewards and dones differ in length");
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            r = 0.0;
        }
        r = rewards[t] + gamma * r;
        out[t] = r;
    }
    out
}

/// On-policy segment of `steps x batch` frames, row `t * batch + b`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub steps: usize,
    pub batch: usize,
    pub obs: Vec<Arc<Image>>,
    pub targets: Vec<Arc<Image>>,
    pub depth: Vec<Option<Arc<Image>>>,
    pub prev_action: Vec<Option<usize>>,
    pub prev_reward: Vec<f32>,
    pub reset: Vec<bool>,
    pub init: AgentState<f32>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// A replayed in-episode sequence. `obs.len()` is the number of regression
/// steps, plus one when a bootstrap frame is included.
#[derive(Debug, Clone)]
pub struct ReplaySequence {
    pub obs: Vec<Arc<Image>>,
    pub targets: Vec<Arc<Image>>,
    pub prev_action: Vec<Option<usize>>,
    pub prev_reward: Vec<f32>,
    pub init: AgentState<f32>,
    pub actions: Vec<usize>,
    /// Frozen value targets, one per regression step.
    pub value_returns: Option<Vec<f64>>,
    /// Frozen pixel-control targets, `[L][q][q]`.
    pub pc_returns: Option<Vec<f64>>,
}

impl ReplaySequence {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Debug, Clone)]
pub struct RewardSample {
    pub obs: [Arc<Image>; 3],
    pub targets: [Arc<Image>; 3],
    /// 0 negative, 1 zero, 2 positive.
    pub class: usize,
}

pub fn reward_class(r: f32) -> usize {
    if r < 0.0 {
        0
    } else if r > 0.0 {
        2
    } else {
        1
    }
}

/// Everything one update consumes.
#[derive(Debug, Clone, Default)]
pub struct LossInputs {
    pub segment: Option<Segment>,
    pub value_replay: Option<ReplaySequence>,
    pub pixel_replay: Option<ReplaySequence>,
    /// Reward prediction triples; the loss is their mean.
    pub reward: Vec<RewardSample>,
    /// Depth normalization range.
    pub max_depth: f32,
}

fn pooled(cache: &mut HashMap<*const Image, Arc<Image>>, img: &Arc<Image>, factor: usize) -> Arc<Image> {
    cache.entry(Arc::as_ptr(img)).or_insert_with(|| Arc::new(img.average_pool(factor))).clone()
}

fn mse_grad<T: Real>(out: &[T], target: &[f32], weight: f64) -> (f64, Vec<T>) {
    let n = out.len() as f64;
    let mut loss = 0.0;
    let mut d = vec![T::zero(); out.len()];
    for ((o, t), g) in out.iter().zip(target).zip(d.iter_mut()) {
        let e = o.as_f64() - *t as f64;
        loss += e * e;
        *g = T::from_f64(weight * 2.0 * e / n);
    }
    (loss / n, d)
}

/// Mean absolute intensity change per Q-map cell between two frames,
/// `[q][q]`, over the centered crop covered by the map.
pub fn pixel_change(a: &Image, b: &Image, q_side: usize, cell: usize) -> Vec<f64> {
    let side = a.width;
    let off = (side - q_side * cell) / 2;
    let mut out = vec![0.0; q_side * q_side];
    let norm = (cell * cell * a.channels) as f64;
    for c in 0..a.channels {
        for y in 0..q_side * cell {
            for x in 0..q_side * cell {
                let d = (a.at(c, y + off, x + off) - b.at(c, y + off, x + off)).abs() as f64;
                out[(y / cell) * q_side + x / cell] += d / norm;
            }
        }
    }
    out
}

/// Losses (all nine components) and optionally the gradient of the
/// weighted total with respect to every parameter.
pub fn loss_and_grad<T: Real>(
    params: &Params<T>,
    inputs: &LossInputs,
    w: &LossWeights,
    want_grad: bool,
) -> Result<(Losses, Option<Params<T>>), NetError> {
    let cfg = params.config;
    let mut grads = Params::<T>::zeros(cfg);
    let mut l = Losses::default();
    let mut pool_cache = HashMap::new();
    let a = cfg.actions;

    if let Some(seg) = &inputs.segment {
        let n = seg.steps * seg.batch;
        let frames: Vec<Frame> = seg.obs.iter().zip(&seg.targets).map(|(o, t)| Frame { obs: o, target: t }).collect();
        let enc = encode_forward(params, &frames)?;
        let init = AgentState { h: seg.init.h.iter().map(|v| T::from_f32(*v)).collect(), c: seg.init.c.iter().map(|v| T::from_f32(*v)).collect() };
        let core = core_forward(
            params,
            &CoreInput {
                steps: seg.steps,
                batch: seg.batch,
                emb: &enc.emb,
                prev_action: &seg.prev_action,
                prev_reward: &seg.prev_reward,
                reset: &seg.reset,
                init: &init,
            },
        );
        let pv = policy_value_forward(params, &core.h, n);
        let inv_n = 1.0 / n as f64;
        let mut d_logits = vec![T::zero(); n * a];
        let mut d_values = vec![T::zero(); n];
        for k in 0..n {
            let adv = seg.advantages[k];
            let act = seg.actions[k];
            let lp = &pv.log_probs[k * a..][..a];
            let p = &pv.probs[k * a..][..a];
            let ent: f64 = -(0..a).map(|j| p[j].as_f64() * lp[j].as_f64()).sum::<f64>();
            l.actor -= adv * lp[act].as_f64() * inv_n;
            l.entropy += ent * inv_n;
            let v = pv.values[k].as_f64();
            l.critic += 0.5 * (seg.returns[k] - v).powi(2) * inv_n;
            for j in 0..a {
                let pj = p[j].as_f64();
                let ind = if j == act { 1.0 } else { 0.0 };
                let g_actor = -adv * (ind - pj) * inv_n;
                let g_ent = -pj * (lp[j].as_f64() + ent) * inv_n;
                d_logits[k * a + j] = T::from_f64(w.actor * g_actor - w.entropy * g_ent);
            }
            d_values[k] = T::from_f64(w.critic * (v - seg.returns[k]) * inv_n);
        }
        let mut dh = if want_grad {
            policy_value_backward(params, &core.h, n, &d_logits, &d_values, &mut grads)
        } else {
            Vec::new()
        };

        let has_depth = seg.depth.iter().all(Option::is_some);
        let mut heads = Vec::new();
        if w.observation > 0.0 {
            heads.push(ReconHead::Observation);
        }
        if w.target > 0.0 {
            heads.push(ReconHead::Target);
        }
        if w.depth > 0.0 && has_depth {
            heads.push(ReconHead::Depth);
        }
        if !heads.is_empty() {
            let rec = reconstruct_forward(params, &core.h, n, &heads);
            let f = cfg.aux_downsize;
            let mut d_out = Vec::new();
            for (head, out) in heads.iter().zip(&rec.outputs) {
                let mut tgt = Vec::with_capacity(out.len());
                for k in 0..n {
                    match head {
                        ReconHead::Observation => tgt.extend_from_slice(&pooled(&mut pool_cache, &seg.obs[k], f).data),
                        ReconHead::Target => tgt.extend_from_slice(&pooled(&mut pool_cache, &seg.targets[k], f).data),
                        ReconHead::Depth => {
                            let d = pooled(&mut pool_cache, seg.depth[k].as_ref().expect("depth present"), f);
                            tgt.extend(d.data.iter().map(|v| (v / inputs.max_depth).clamp(0.0, 1.0)));
                        }
                    }
                }
                let weight = match head {
                    ReconHead::Observation => w.observation,
                    ReconHead::Target => w.target,
                    ReconHead::Depth => w.depth,
                };
                let (loss, d) = mse_grad(out, &tgt, weight);
                match head {
                    ReconHead::Observation => l.observation = loss,
                    ReconHead::Target => l.target = loss,
                    ReconHead::Depth => l.depth = loss,
                }
                d_out.push(d);
            }
            if want_grad {
                let d = reconstruct_backward(params, &core.h, &rec, &d_out, &mut grads);
                dh.iter_mut().zip(&d).for_each(|(x, y)| *x += *y);
            }
        }
        if want_grad {
            let d_emb = core_backward(params, &core, &dh, &mut grads);
            encode_backward(params, &enc, &d_emb, &mut grads);
        }
    }

    if let Some(seq) = &inputs.value_replay {
        if w.off_policy_critic > 0.0 {
            if let Some(rets) = &seq.value_returns {
                l.off_policy_critic = replay_loss(params, seq, want_grad, &mut grads, |_, h, n_frames, grads| {
                    let steps = rets.len();
                    let pv = policy_value_forward(params, h, n_frames);
                    let mut d_values = vec![T::zero(); n_frames];
                    let mut loss = 0.0;
                    for t in 0..steps {
                        let v = pv.values[t].as_f64();
                        loss += 0.5 * (rets[t] - v).powi(2) / steps as f64;
                        d_values[t] = T::from_f64(w.off_policy_critic * (v - rets[t]) / steps as f64);
                    }
                    let dh = grads.map(|g| {
                        let d_logits = vec![T::zero(); n_frames * a];
                        policy_value_backward(params, h, n_frames, &d_logits, &d_values, g)
                    });
                    (loss, dh)
                })?;
            }
        }
    }

    if let Some(seq) = &inputs.pixel_replay {
        if w.pixel_control > 0.0 {
            if let Some(rets) = &seq.pc_returns {
                let q_side = cfg.q_side();
                let p = q_side * q_side;
                l.pixel_control = replay_loss(params, seq, want_grad, &mut grads, |_, h, n_frames, grads| {
                    let steps = seq.steps();
                    let pc = pixel_control_forward(params, h, n_frames);
                    let mut d_q = vec![T::zero(); pc.q.len()];
                    let mut loss = 0.0;
                    let denom = (steps * p) as f64;
                    for t in 0..steps {
                        let act = seq.actions[t];
                        for cell in 0..p {
                            let q = pc.q[(t * a + act) * p + cell].as_f64();
                            let e = q - rets[t * p + cell];
                            loss += e * e / denom;
                            d_q[(t * a + act) * p + cell] = T::from_f64(w.pixel_control * 2.0 * e / denom);
                        }
                    }
                    let dh = grads.map(|g| pixel_control_backward(params, h, &pc, &d_q, g));
                    (loss, dh)
                })?;
            }
        }
    }

    if !inputs.reward.is_empty() && w.reward_prediction > 0.0 {
        let m = inputs.reward.len();
        let frames: Vec<Frame> = inputs
            .reward
            .iter()
            .flat_map(|rs| rs.obs.iter().zip(&rs.targets).map(|(o, t)| Frame { obs: o, target: t }))
            .collect();
        let enc = encode_forward(params, &frames)?;
        let scores = reward_prediction_forward(params, &enc.emb, m);
        let mut d = Vec::with_capacity(3 * m);
        for (k, rs) in inputs.reward.iter().enumerate() {
            let s: Vec<f64> = scores[3 * k..3 * k + 3].iter().map(|v| v.as_f64()).collect();
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lz = s.iter().map(|v| (v - top).exp()).sum::<f64>().ln() + top;
            l.reward_prediction += (lz - s[rs.class]) / m as f64;
            for (j, sj) in s.iter().enumerate() {
                let pj = (sj - lz).exp();
                let g = pj - if j == rs.class { 1.0 } else { 0.0 };
                d.push(T::from_f64(w.reward_prediction * g / m as f64));
            }
        }
        if want_grad {
            let d_emb = reward_prediction_backward(params, &enc.emb, m, &d, &mut grads);
            encode_backward(params, &enc, &d_emb, &mut grads);
        }
    }

    Ok((l, want_grad.then_some(grads)))
}

/// Runs trunk and core over a replayed sequence (batch 1), applies `head`
/// to the hidden states and backpropagates its hidden-state gradient.
fn replay_loss<T: Real>(
    params: &Params<T>,
    seq: &ReplaySequence,
    want_grad: bool,
    grads: &mut Params<T>,
    mut head: impl FnMut(&Params<T>, &[T], usize, Option<&mut Params<T>>) -> (f64, Option<Vec<T>>),
) -> Result<f64, NetError> {
    let n = seq.obs.len();
    let frames: Vec<Frame> = seq.obs.iter().zip(&seq.targets).map(|(o, t)| Frame { obs: o, target: t }).collect();
    let enc = encode_forward(params, &frames)?;
    let init = AgentState { h: seq.init.h.iter().map(|v| T::from_f32(*v)).collect(), c: seq.init.c.iter().map(|v| T::from_f32(*v)).collect() };
    let reset = vec![false; n];
    let core = core_forward(
        params,
        &CoreInput {
            steps: n,
            batch: 1,
            emb: &enc.emb,
            prev_action: &seq.prev_action,
            prev_reward: &seq.prev_reward,
            reset: &reset,
            init: &init,
        },
    );
    let (loss, dh) = head(params, &core.h, n, want_grad.then_some(&mut *grads));
    if let Some(dh) = dh {
        let d_emb = core_backward(params, &core, &dh, grads);
        encode_backward(params, &enc, &d_emb, grads);
    }
    Ok(loss)
}

/// Hidden states of a replayed sequence under the given parameters.
pub fn replay_hidden<T: Real>(params: &Params<T>, seq: &ReplaySequence) -> Result<Vec<T>, NetError> {
    let n = seq.obs.len();
    let frames: Vec<Frame> = seq.obs.iter().zip(&seq.targets).map(|(o, t)| Frame { obs: o, target: t }).collect();
    let enc = encode_forward(params, &frames)?;
    let init = AgentState { h: seq.init.h.iter().map(|v| T::from_f32(*v)).collect(), c: seq.init.c.iter().map(|v| T::from_f32(*v)).collect() };
    let reset = vec![false; n];
    Ok(core_forward(
        params,
        &CoreInput {
            steps: n,
            batch: 1,
            emb: &enc.emb,
            prev_action: &seq.prev_action,
            prev_reward: &seq.prev_reward,
            reset: &reset,
            init: &init,
        },
    )
    .h)
}
