//! Seeded random streams.
//!
//! Every consumer gets its own ChaCha stream keyed by `sha256(seed || label)`,
//! so adding a new consumer never shifts the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// A `u64` sub-seed for `label`, for consumers that take a plain seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use rand::Rng;
    stream(seed, label).random()
}
