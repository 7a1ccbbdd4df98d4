//! Keyed random streams so that every stochastic draw (masking, dropout,
//! shuffling) is reproducible regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes, mixed into the key so different uses never collide.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const MASK: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const ADAPT: u64 = 6;
    pub const FINETUNE: u64 = 7;
    pub const BASE: u64 = 8;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive digest of a tuple of integers.
pub fn mix(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Deterministic generator keyed by an ordered tuple of integers.
pub fn stream_rng(parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(parts))
}
