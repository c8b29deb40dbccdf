//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visnav::image::Image;
use visnav::nn::{AgentState, Block, NetworkConfig, Params};
use visnav::train::{loss_and_grad, total_loss, LossInputs, LossWeights, ReplaySequence, RewardSample, Segment};

fn random_image(rng: &mut ChaCha8Rng, channels: usize, side: usize, scale: f32) -> Arc<Image> {
    let mut img = Image::zeros(channels, side, side);
    img.data.iter_mut().for_each(|v| *v = rng.gen::<f32>() * scale);
    Arc::new(img)
}

fn random_state(rng: &mut ChaCha8Rng, batch: usize, width: usize) -> AgentState<f32> {
    AgentState {
        h: (0..batch * width).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        c: (0..batch * width).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    }
}

fn fixture(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> LossInputs {
    let side = cfg.image_side;
    let (steps, batch) = (3, 2);
    let n = steps * batch;
    let targets: Vec<_> = (0..batch).map(|_| random_image(rng, 3, side, 1.0)).collect();
    let segment = Segment {
        steps,
        batch,
        obs: (0..n).map(|_| random_image(rng, 3, side, 1.0)).collect(),
        targets: (0..n).map(|k| targets[k % batch].clone()).collect(),
        depth: (0..n).map(|_| Some(random_image(rng, 1, side, 4.0))).collect(),
        prev_action: (0..n).map(|k| if k == 3 { None } else { Some(k % 5) }).collect(),
        prev_reward: (0..n).map(|k| [0.0, -0.01, 1.0][k % 3]).collect(),
        // Entry 1 starts a new episode at step 1.
        reset: (0..n).map(|k| k == 3).collect(),
        init: random_state(rng, batch, cfg.lstm),
        actions: (0..n).map(|k| (k * 3) % 5).collect(),
        returns: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        advantages: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    let replay = |rng: &mut ChaCha8Rng, frames: usize, steps: usize| ReplaySequence {
        obs: (0..frames).map(|_| random_image(rng, 3, side, 1.0)).collect(),
        targets: vec![targets[0].clone(); frames],
        prev_action: (0..frames).map(|t| Some(t % 5)).collect(),
        prev_reward: vec![0.0; frames],
        init: random_state(rng, 1, cfg.lstm),
        actions: (0..steps).map(|t| (t + 1) % 5).collect(),
        value_returns: None,
        pc_returns: None,
    };
    let mut value_replay = replay(rng, 4, 3);
    value_replay.value_returns = Some(vec![0.3, -0.2, 0.9]);
    let mut pixel_replay = replay(rng, 3, 3);
    let q = cfg.q_side();
    pixel_replay.pc_returns = Some((0..3 * q * q).map(|_| rng.gen_range(0.0..0.5)).collect());
    let reward: Vec<RewardSample> = [2, 0]
        .into_iter()
        .map(|class| RewardSample {
            obs: [random_image(rng, 3, side, 1.0), random_image(rng, 3, side, 1.0), random_image(rng, 3, side, 1.0)],
            targets: [targets[1].clone(), targets[1].clone(), targets[1].clone()],
            class,
        })
        .collect();
    LossInputs {
        segment: Some(segment),
        value_replay: Some(value_replay),
        pixel_replay: Some(pixel_replay),
        reward,
        max_depth: 5.0,
    }
}

pub struct GradientCheck {
    /// Parameters whose gradient is above the finite-difference noise floor.
    pub checked: usize,
    pub probed: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

/// Analytic gradients of the total loss (all components active) of the
/// tiny network in f64 against central differences on `count` parameters.
pub fn gradient_check(count: usize) -> GradientCheck {
    let cfg = NetworkConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = Params::<f64>::init(cfg, 5);
    // Nonzero biases keep every branch of the network exercised.
    for blk in Block::ALL {
        if blk.is_bias() {
            params.get_mut(*blk).iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
    }
    let inputs = fixture(&cfg, &mut rng);
    let w = LossWeights::default();

    let (losses, grads) = loss_and_grad(&params, &inputs, &w, true).unwrap();
    let grads = grads.unwrap();
    let mut failures = Vec::new();
    for (name, v) in visnav::train::Losses::NAMES.iter().zip(losses.values()) {
        if v.abs() == 0.0 {
            failures.push(format!("loss component {name} is inactive"));
        }
    }

    let f = |p: &Params<f64>| {
        let (l, _) = loss_and_grad(p, &inputs, &w, false).unwrap();
        total_loss(&l, &w)
    };

    // Every block gets probed at least twice, the rest at random. Relative
    // error is only meaningful above the finite-difference noise floor
    // (about 1e-10 here); smaller gradients are checked in absolute terms
    // and do not count towards the quota.
    let mut probes = Vec::new();
    for (bi, block) in params.blocks.iter().enumerate() {
        for _ in 0..2 {
            probes.push((bi, rng.gen_range(0..block.len())));
        }
    }
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut k = 0;
    while checked < count && k < 50 * count {
        let (bi, i) = if k < probes.len() {
            probes[k]
        } else {
            let bi = rng.gen_range(0..params.blocks.len());
            (bi, rng.gen_range(0..params.blocks[bi].len()))
        };
        k += 1;
        let orig = params.blocks[bi][i];
        params.blocks[bi][i] = orig + eps;
        let up = f(&params);
        params.blocks[bi][i] = orig - eps;
        let down = f(&params);
        params.blocks[bi][i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.blocks[bi][i];
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-6 {
            if (analytic - numeric).abs() > 1e-9 {
                failures.push(format!("{} [{i}]: analytic {analytic:e} numeric {numeric:e}", Block::ALL[bi].name()));
            }
            continue;
        }
        checked += 1;
        let rel = (analytic - numeric).abs() / scale;
        worst = worst.max(rel);
        if rel > 1e-4 {
            failures.push(format!("{} [{i}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}", Block::ALL[bi].name()));
        }
    }
    GradientCheck { checked, probed: k, worst, failures }
}
