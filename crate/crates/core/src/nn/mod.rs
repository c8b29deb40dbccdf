//! Goal-conditioned recurrent actor-critic network with auxiliary heads.
//!
//! Parameters live in a flat container indexed by [`Block`]; every forward
//! function is pure in `(params, inputs)` and the recurrent state is passed
//! explicitly. The code is generic over `f32` (training) and `f64`
//! (gradient checks).

mod checkpoint;
mod net;
pub mod ops;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, EnvKind};
pub use net::{
    core_backward, core_forward, encode, encode_backward, encode_forward, pixel_control_backward, pixel_control_forward,
    pixel_control_q, policy_value, policy_value_backward, policy_value_forward, reconstruct, reconstruct_backward,
    reconstruct_forward, reward_prediction, reward_prediction_backward, reward_prediction_forward, core_step, AgentState,
    CoreCache, CoreInput, EncodeCache, Frame, PixelControlCache, PolicyValue, ReconCache, ReconHead,
};

pub trait Real:
    Float + Default + Debug + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + Sum
{
    /// `C = A B + beta C` with explicit strides.
    ///
    /// # Safety
    /// The pointers must address every element touched by the given
    /// dimensions and strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f32(self) -> f32;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn from_f32(v: f32) -> f32 {
        v
    }
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn as_f32(self) -> f32 {
        self
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn from_f32(v: f32) -> f64 {
        v as f64
    }
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("input shape mismatch: expected {expected:?}, found {found:?}")]
    Shape { expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error("invalid network configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalFusion {
    /// Observation and target go through the same trunk; features are
    /// concatenated before the fully-connected layer.
    SharedTrunkConcat,
    /// Observation and target are stacked as six input channels.
    ChannelConcat,
}

impl std::str::FromStr for GoalFusion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shared_trunk_concat" => Ok(GoalFusion::SharedTrunkConcat),
            "channel_concat" => Ok(GoalFusion::ChannelConcat),
            other => Err(format!("unknown goal fusion `{other}`")),
        }
    }
}

/// Kernel and stride of every transposed convolution.
pub const DECONV_KERNEL: usize = 4;
pub const DECONV_STRIDE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub image_side: usize,
    pub convs: [ConvSpec; 3],
    pub embedding: usize,
    pub lstm: usize,
    pub actions: usize,
    /// Reconstruction targets are the inputs average-pooled by this factor.
    pub aux_downsize: usize,
    /// Channels of the shared first reconstruction deconvolution.
    pub recon_channels: usize,
    pub goal_fusion: GoalFusion,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            image_side: 84,
            convs: [
                ConvSpec { channels: 16, kernel: 8, stride: 4 },
                ConvSpec { channels: 32, kernel: 4, stride: 2 },
                ConvSpec { channels: 32, kernel: 4, stride: 1 },
            ],
            embedding: 512,
            lstm: 512,
            actions: 5,
            aux_downsize: 4,
            recon_channels: 16,
            goal_fusion: GoalFusion::SharedTrunkConcat,
        }
    }
}

impl NetworkConfig {
    /// 8x8 inputs and widths of at most 16, for finite-difference checks.
    pub fn tiny() -> Self {
        NetworkConfig {
            image_side: 8,
            convs: [
                ConvSpec { channels: 4, kernel: 2, stride: 2 },
                ConvSpec { channels: 4, kernel: 2, stride: 1 },
                ConvSpec { channels: 4, kernel: 2, stride: 1 },
            ],
            embedding: 8,
            lstm: 8,
            actions: 5,
            aux_downsize: 4,
            recon_channels: 4,
            goal_fusion: GoalFusion::SharedTrunkConcat,
        }
    }

    /// Reduced width and 24x24 inputs for CPU training runs.
    pub fn desk() -> Self {
        NetworkConfig {
            image_side: 24,
            convs: [
                ConvSpec { channels: 16, kernel: 4, stride: 2 },
                ConvSpec { channels: 32, kernel: 3, stride: 2 },
                ConvSpec { channels: 32, kernel: 3, stride: 1 },
            ],
            embedding: 256,
            lstm: 128,
            actions: 5,
            aux_downsize: 4,
            recon_channels: 8,
            goal_fusion: GoalFusion::SharedTrunkConcat,
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.goal_fusion {
            GoalFusion::SharedTrunkConcat => 3,
            GoalFusion::ChannelConcat => 6,
        }
    }

    /// Spatial side after each convolution.
    pub fn conv_sides(&self) -> [usize; 3] {
        let mut n = self.image_side;
        let mut out = [0; 3];
        for (o, c) in out.iter_mut().zip(&self.convs) {
            n = (n - c.kernel) / c.stride + 1;
            *o = n;
        }
        out
    }

    /// Flattened size of one trunk output.
    pub fn trunk_features(&self) -> usize {
        let s = self.conv_sides()[2];
        self.convs[2].channels * s * s
    }

    pub fn embedding_input(&self) -> usize {
        match self.goal_fusion {
            GoalFusion::SharedTrunkConcat => 2 * self.trunk_features(),
            GoalFusion::ChannelConcat => self.trunk_features(),
        }
    }

    /// LSTM input: embedding, one-hot previous action, previous reward.
    pub fn core_input(&self) -> usize {
        self.embedding + self.actions + 1
    }

    /// Channels and side of the pixel-control bottom map.
    pub fn pc_bottom(&self) -> (usize, usize) {
        (self.convs[1].channels, self.conv_sides()[1])
    }

    pub fn pc_bottom_len(&self) -> usize {
        let (c, s) = self.pc_bottom();
        c * s * s
    }

    pub fn q_side(&self) -> usize {
        (self.pc_bottom().1 - 1) * DECONV_STRIDE + DECONV_KERNEL
    }

    /// Pixel size of one Q-map cell and the side of the centered crop it
    /// covers.
    pub fn pc_cell(&self) -> (usize, usize) {
        let q = self.q_side();
        let cell = (self.image_side / q).max(1);
        (cell, cell * q)
    }

    pub fn recon_bottom(&self) -> (usize, usize) {
        (self.convs[2].channels, self.conv_sides()[2])
    }

    pub fn recon_bottom_len(&self) -> usize {
        let (c, s) = self.recon_bottom();
        c * s * s
    }

    /// Sides after the first and second reconstruction deconvolution.
    pub fn recon_sides(&self) -> (usize, usize) {
        let m = (self.recon_bottom().1 - 1) * DECONV_STRIDE + DECONV_KERNEL;
        (m, (m - 1) * DECONV_STRIDE + DECONV_KERNEL)
    }

    pub fn recon_side(&self) -> usize {
        self.image_side / self.aux_downsize
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let err = |m: &str| Err(NetError::Config(m.to_string()));
        let mut n = self.image_side;
        for c in &self.convs {
            if c.kernel == 0 || c.stride == 0 || c.channels == 0 || n < c.kernel {
                return err("convolution chain does not fit the image side");
            }
            n = (n - c.kernel) / c.stride + 1;
        }
        if self.embedding == 0 || self.lstm == 0 || self.actions == 0 || self.recon_channels == 0 {
            return err("zero width");
        }
        if self.aux_downsize == 0 || self.image_side % self.aux_downsize != 0 {
            return err("image side must be a multiple of the auxiliary downsize factor");
        }
        if self.recon_sides().1 < self.recon_side() {
            return err("reconstruction output smaller than its target");
        }
        if self.q_side() > self.image_side {
            return err("pixel-control map larger than the image");
        }
        Ok(())
    }

    /// Parameter shape of every block, in canonical order.
    pub fn block_shapes(&self) -> Vec<(Block, Vec<usize>)> {
        use Block::*;
        let [c1, c2, c3] = self.convs;
        let cin = self.input_channels();
        let k = DECONV_KERNEL;
        let (h, e, a) = (self.lstm, self.embedding, self.actions);
        let rc = self.recon_channels;
        vec![
            (Conv1W, vec![c1.channels, cin, c1.kernel, c1.kernel]),
            (Conv1B, vec![c1.channels]),
            (Conv2W, vec![c2.channels, c1.channels, c2.kernel, c2.kernel]),
            (Conv2B, vec![c2.channels]),
            (Conv3W, vec![c3.channels, c2.channels, c3.kernel, c3.kernel]),
            (Conv3B, vec![c3.channels]),
            (EmbW, vec![e, self.embedding_input()]),
            (EmbB, vec![e]),
            (LstmWx, vec![4 * h, self.core_input()]),
            (LstmWh, vec![4 * h, h]),
            (LstmB, vec![4 * h]),
            (PolicyW, vec![a, h]),
            (PolicyB, vec![a]),
            (ValueW, vec![1, h]),
            (ValueB, vec![1]),
            (PcFcW, vec![self.pc_bottom_len(), h]),
            (PcFcB, vec![self.pc_bottom_len()]),
            (PcValueW, vec![c2.channels, 1, k, k]),
            (PcValueB, vec![1]),
            (PcAdvW, vec![c2.channels, a, k, k]),
            (PcAdvB, vec![a]),
            (RewardW, vec![3, 3 * e]),
            (RewardB, vec![3]),
            (ReconFcW, vec![self.recon_bottom_len(), h]),
            (ReconFcB, vec![self.recon_bottom_len()]),
            (ReconSharedW, vec![c3.channels, rc, k, k]),
            (ReconSharedB, vec![rc]),
            (ReconObsW, vec![rc, 3, k, k]),
            (ReconObsB, vec![3]),
            (ReconTargetW, vec![rc, 3, k, k]),
            (ReconTargetB, vec![3]),
            (ReconDepthW, vec![rc, 1, k, k]),
            (ReconDepthB, vec![1]),
        ]
    }
}

macro_rules! blocks {
    ($($name:ident => $label:literal),* $(,)?) => {
        /// Named parameter blocks.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum Block { $($name),* }

        impl Block {
            pub const ALL: &'static [Block] = &[$(Block::$name),*];

            pub fn name(self) -> &'static str {
                match self { $(Block::$name => $label),* }
            }
        }
    };
}

blocks! {
    Conv1W => "conv1.weight", Conv1B => "conv1.bias",
    Conv2W => "conv2.weight", Conv2B => "conv2.bias",
    Conv3W => "conv3.weight", Conv3B => "conv3.bias",
    EmbW => "embedding.weight", EmbB => "embedding.bias",
    LstmWx => "lstm.input_weight", LstmWh => "lstm.hidden_weight", LstmB => "lstm.bias",
    PolicyW => "policy.weight", PolicyB => "policy.bias",
    ValueW => "value.weight", ValueB => "value.bias",
    PcFcW => "pixel_control.fc.weight", PcFcB => "pixel_control.fc.bias",
    PcValueW => "pixel_control.value.weight", PcValueB => "pixel_control.value.bias",
    PcAdvW => "pixel_control.advantage.weight", PcAdvB => "pixel_control.advantage.bias",
    RewardW => "reward_prediction.weight", RewardB => "reward_prediction.bias",
    ReconFcW => "reconstruction.fc.weight", ReconFcB => "reconstruction.fc.bias",
    ReconSharedW => "reconstruction.shared.weight", ReconSharedB => "reconstruction.shared.bias",
    ReconObsW => "reconstruction.observation.weight", ReconObsB => "reconstruction.observation.bias",
    ReconTargetW => "reconstruction.target.weight", ReconTargetB => "reconstruction.target.bias",
    ReconDepthW => "reconstruction.depth.weight", ReconDepthB => "reconstruction.depth.bias",
}

impl Block {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_bias(self) -> bool {
        self.name().ends_with(".bias")
    }
}

/// All trainable weights, or a gradient of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub config: NetworkConfig,
    pub blocks: Vec<Vec<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros(config: NetworkConfig) -> Self {
        let blocks = config.block_shapes().iter().map(|(_, s)| vec![T::zero(); s.iter().product()]).collect();
        Params { config, blocks }
    }

    /// Uniform weights with He scaling for layers followed by a rectifier
    /// and plain fan-in scaling elsewhere; zero biases.
    pub fn init(config: NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        for (block, shape) in config.block_shapes() {
            if block.is_bias() {
                continue;
            }
            let fan_in: usize = match block {
                // Transposed convolutions: [Ci][Co][k][k]; each output sees
                // about Ci * (k / s)^2 inputs.
                Block::PcValueW | Block::PcAdvW | Block::ReconSharedW | Block::ReconObsW | Block::ReconTargetW
                | Block::ReconDepthW => shape[0] * (shape[2] / DECONV_STRIDE).pow(2),
                _ => shape[1..].iter().product(),
            };
            let gain: f64 = match block {
                Block::Conv1W
                | Block::Conv2W
                | Block::Conv3W
                | Block::EmbW
                | Block::PcFcW
                | Block::ReconFcW
                | Block::ReconSharedW => 6.0,
                _ => 1.0,
            };
            let bound = (gain / fan_in as f64).sqrt();
            for v in p.blocks[block.index()].iter_mut() {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        }
        p
    }

    pub fn get(&self, b: Block) -> &[T] {
        &self.blocks[b.index()]
    }

    pub fn get_mut(&mut self, b: Block) -> &mut [T] {
        &mut self.blocks[b.index()]
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> T {
        self.blocks.iter().flatten().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, s: T) {
        self.blocks.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    /// Element `k` of the concatenation of all blocks.
    pub fn flat_mut(&mut self, mut k: usize) -> &mut T {
        for b in self.blocks.iter_mut() {
            if k < b.len() {
                return &mut b[k];
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat(&self, mut k: usize) -> T {
        for b in &self.blocks {
            if k < b.len() {
                return b[k];
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config,
            blocks: self.blocks.iter().map(|b| b.iter().map(|v| U::from_f64(v.as_f64())).collect()).collect(),
        }
    }
}
