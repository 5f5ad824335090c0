//! Fused synthetic speech detector: first-digit, short/long-term prediction and
//! bicoherence features, a small fully-connected fusion network, anti-forensic
//! attacks and the evaluation harness around them.

pub mod attacks;
pub mod audio;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};

/// Derives an independent stream seed from a base seed (SplitMix64 mixing).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
