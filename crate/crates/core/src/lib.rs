//! Goal-conditioned visual navigation: grid dynamics, a procedural RGB-D
//! room simulator, a dataset-replay environment, a recurrent actor-critic
//! network with auxiliary heads, its trainer and an evaluation harness.

pub mod dataset;
pub mod env;
pub mod eval;
pub mod grid;
pub mod image;
pub mod nn;
pub mod sim;
pub mod train;

/// Combines two seeds into a well-spread 64-bit seed (SplitMix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
