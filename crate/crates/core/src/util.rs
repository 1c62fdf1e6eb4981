//! Small shared helpers: stable hashing, deterministic RNG derivation,
//! rounding conventions used everywhere scores are rendered.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Platform-independent 64-bit hash of a byte string.
///
/// `std::hash` hashers are not guaranteed stable across releases, so anything
/// persisted (shard plans, seeded draws keyed by record id) goes through this.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Derive a deterministic RNG from a run seed and a per-item key.
///
/// Mixing the key into the seed makes draws independent of processing order,
/// so parallel runs produce the same streams as sequential ones.
pub fn derive_rng(seed: u64, key: &str) -> ChaCha20Rng {
    let mut material = Vec::with_capacity(8 + key.len());
    material.extend_from_slice(&seed.to_le_bytes());
    material.extend_from_slice(key.as_bytes());
    ChaCha20Rng::seed_from_u64(stable_hash(&material))
}

/// Round to one decimal, half away from zero. All rendered scores and
/// percentages use this convention.
pub fn round1(x: f64) -> f64 {
    if x >= 0.0 {
        (x * 10.0 + 0.5).floor() / 10.0
    } else {
        (x * 10.0 - 0.5).ceil() / 10.0
    }
}

/// Collapse runs of whitespace to single spaces and trim the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_hash_is_stable() {
        assert_eq!(stable_hash(b"abc"), stable_hash(b"abc"));
        assert_ne!(stable_hash(b"abc"), stable_hash(b"abd"));
    }

    #[test]
    fn round1_half_up() {
        assert_eq!(round1(35.75), 35.8);
        assert_eq!(round1(475.0 / 9.0), 52.8);
        assert_eq!(round1(1.04), 1.0);
        assert_eq!(round1(1.05), 1.1);
        assert_eq!(round1(0.0), 0.0);
    }

    #[test]
    fn derive_rng_is_keyed() {
        use rand::Rng;
        let a: u64 = derive_rng(7, "rec-1").gen();
        let b: u64 = derive_rng(7, "rec-1").gen();
        let c: u64 = derive_rng(7, "rec-2").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
