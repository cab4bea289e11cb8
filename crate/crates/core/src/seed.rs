//! Seed splitting: every consumer gets its own ChaCha stream derived from
//! `sha256(seed_le || name)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(seed: u64, consumer: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(consumer.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64, consumer: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, consumer))
}
