//! Flat `key = value` training configuration.

use std::path::Path;

use super::{LossWeights, TrainError};
use crate::nn::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// Frame budget; training stops once the counter reaches it.
    pub frames: u64,
    pub instances: usize,
    pub rollout_length: usize,
    pub discount: f64,
    pub learning_rate: f64,
    /// Frames over which the learning rate decays linearly to zero.
    pub learning_rate_anneal_frames: f64,
    pub rmsprop_alpha: f32,
    pub rmsprop_epsilon: f32,
    pub max_gradient_norm: f64,
    pub replay_buffer_size: usize,
    pub pixel_control_discount: f64,
    pub pixel_control_downsize: usize,
    /// Probability that a reward-prediction sample ends on a nonzero reward.
    pub reward_prediction_skew: f64,
    pub aux_updates_per_step: usize,
    pub weights: LossWeights,
    pub network: NetworkConfig,
    /// Frames between metric rows.
    pub log_interval: u64,
    /// Frames between checkpoints; 0 keeps only the final one.
    pub checkpoint_interval: u64,
    /// Step environment instances on the rayon pool.
    pub concurrent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            frames: 8_000_000,
            instances: 16,
            rollout_length: 20,
            discount: 0.99,
            learning_rate: 7e-4,
            learning_rate_anneal_frames: 4e7,
            rmsprop_alpha: 0.99,
            rmsprop_epsilon: 1e-5,
            max_gradient_norm: 0.5,
            replay_buffer_size: 2000,
            pixel_control_discount: 0.9,
            pixel_control_downsize: 4,
            reward_prediction_skew: 0.5,
            aux_updates_per_step: 1,
            weights: LossWeights::default(),
            network: NetworkConfig::default(),
            log_interval: 10_000,
            checkpoint_interval: 0,
            concurrent: false,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment. Errors carry the
/// 1-based line number.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, TrainError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, TrainError> {
    v.parse().map_err(|_| TrainError::Config(format!("line {line}: invalid value {v:?} for {key}")))
}

fn network_preset(name: &str) -> Option<NetworkConfig> {
    match name {
        "default" | "full" => Some(NetworkConfig::default()),
        "desk" => Some(NetworkConfig::desk()),
        "tiny" => Some(NetworkConfig::tiny()),
        _ => None,
    }
}

impl TrainConfig {
    /// Defaults for training on recorded datasets (lower discount).
    pub fn dataset_defaults() -> Self {
        TrainConfig { discount: 0.9, frames: 30_000_000, ..Default::default() }
    }

    pub fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), TrainError> {
        let w = &mut self.weights;
        match key {
            "seed" => self.seed = num(line, key, v)?,
            "frames" => self.frames = num::<f64>(line, key, v)? as u64,
            "instances" | "environment_instances" => self.instances = num(line, key, v)?,
            "rollout_length" | "maximum_rollout_length" => self.rollout_length = num(line, key, v)?,
            "discount" | "discount_factor" | "gamma" => self.discount = num(line, key, v)?,
            "learning_rate" => self.learning_rate = num(line, key, v)?,
            "learning_rate_anneal_frames" => self.learning_rate_anneal_frames = num(line, key, v)?,
            "rmsprop_alpha" => self.rmsprop_alpha = num(line, key, v)?,
            "rmsprop_epsilon" => self.rmsprop_epsilon = num(line, key, v)?,
            "max_gradient_norm" => self.max_gradient_norm = num(line, key, v)?,
            "replay_buffer_size" => self.replay_buffer_size = num(line, key, v)?,
            "pixel_control_discount" => self.pixel_control_discount = num(line, key, v)?,
            "pixel_control_downsize" => self.pixel_control_downsize = num(line, key, v)?,
            "reward_prediction_skew" => self.reward_prediction_skew = num(line, key, v)?,
            "aux_updates_per_step" => self.aux_updates_per_step = num(line, key, v)?,
            "entropy_weight" | "entropy_gradient_weight" => w.entropy = num(line, key, v)?,
            "actor_weight" => w.actor = num(line, key, v)?,
            "critic_weight" => w.critic = num(line, key, v)?,
            "off_policy_critic_weight" => w.off_policy_critic = num(line, key, v)?,
            "pixel_control_weight" => w.pixel_control = num(line, key, v)?,
            "reward_prediction_weight" => w.reward_prediction = num(line, key, v)?,
            "depth_prediction_weight" => w.depth = num(line, key, v)?,
            "observation_reconstruction_weight" => w.observation = num(line, key, v)?,
            "target_reconstruction_weight" => w.target = num(line, key, v)?,
            "auxiliary" => {
                if !num::<bool>(line, key, v)? {
                    *w = LossWeights::paac_only();
                }
            }
            "network" => {
                self.network = network_preset(v)
                    .ok_or_else(|| TrainError::Config(format!("line {line}: unknown network preset {v:?}")))?
            }
            "image_side" => self.network.image_side = num(line, key, v)?,
            "embedding_width" => self.network.embedding = num(line, key, v)?,
            "lstm_width" => self.network.lstm = num(line, key, v)?,
            "log_interval" => self.log_interval = num::<f64>(line, key, v)? as u64,
            "checkpoint_interval" => self.checkpoint_interval = num::<f64>(line, key, v)? as u64,
            "concurrent" => self.concurrent = num(line, key, v)?,
            _ => return Err(TrainError::Config(format!("line {line}: unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every entry of a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), TrainError> {
        for (line, k, v) in parse_key_values(text)? {
            self.set(line, &k, &v)?;
        }
        self.validate()
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.instances == 0 || self.rollout_length == 0 {
            return bad("instances and rollout_length must be positive");
        }
        if self.replay_buffer_size == 0 {
            return bad("replay_buffer_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.discount) || !(0.0..=1.0).contains(&self.pixel_control_discount) {
            return bad("discount factors must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.reward_prediction_skew) {
            return bad("reward_prediction_skew must lie in [0, 1]");
        }
        if self.learning_rate_anneal_frames <= 0.0 || self.max_gradient_norm <= 0.0 {
            return bad("learning_rate_anneal_frames and max_gradient_norm must be positive");
        }
        if self.pixel_control_downsize != self.network.aux_downsize {
            return bad("pixel_control_downsize must match the network's auxiliary downsize factor");
        }
        if !self.weights.all_nonnegative() {
            return bad("loss weights must be nonnegative");
        }
        self.network.validate().map_err(|e| TrainError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_table() {
        let c = TrainConfig::default();
        assert_eq!(c.instances, 16);
        assert_eq!(c.rollout_length, 20);
        assert_eq!(c.replay_buffer_size, 2000);
        assert_eq!(c.max_gradient_norm, 0.5);
        assert_eq!(c.learning_rate, 7e-4);
        assert_eq!(c.rmsprop_alpha, 0.99);
        assert_eq!(c.rmsprop_epsilon, 1e-5);
        assert_eq!(c.pixel_control_discount, 0.9);
        assert_eq!(c.pixel_control_downsize, 4);
        assert_eq!(TrainConfig::dataset_defaults().discount, 0.9);
        c.validate().unwrap();
    }

    #[test]
    fn parses_overrides_and_reports_lines() {
        let mut c = TrainConfig::default();
        c.apply_text("# comment\nseed = 7\nframes = 2e6\nnetwork = desk\npixel_control_weight = 0\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.frames, 2_000_000);
        assert_eq!(c.network, NetworkConfig::desk());
        assert_eq!(c.weights.pixel_control, 0.0);
        let err = TrainConfig::default().apply_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = TrainConfig::default().apply_text("seed 1\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn auxiliary_off_zeroes_auxiliary_weights() {
        let mut c = TrainConfig::default();
        c.apply_text("auxiliary = false").unwrap();
        assert_eq!(c.weights, LossWeights::paac_only());
    }
}
