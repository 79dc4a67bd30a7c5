//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream whose 256-bit
//! seed is the concatenation of a base seed, a sample size, a replicate
//! index and a purpose tag. Distinct keys never share a stream, and adding
//! sample sizes or replicates to an experiment leaves existing streams
//! untouched.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Structure = 1,
    Rows = 2,
    Noise = 3,
    NoiseSeed = 4,
    Slln = 5,
}

pub fn stream(seed: u64, m: u64, replicate: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&m.to_le_bytes());
    key[16..24].copy_from_slice(&replicate.to_le_bytes());
    key[24..32].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Noise seed for one `(seed, m, replicate)` cell of an experiment.
pub fn cell_noise_seed(seed: u64, m: u64, replicate: u64) -> u64 {
    stream(seed, m, replicate, Purpose::NoiseSeed).next_u64()
}
