//! Seed fan-out: one global seed, one independent stream per component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a component seed by hashing the global seed with a component name.
pub fn derive(global: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Deterministic RNG for a component.
pub fn rng(global: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(global, component))
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_get_distinct_streams() {
        assert_eq!(derive(42, "forest"), derive(42, "forest"));
        assert_ne!(derive(42, "forest"), derive(42, "spectral"));
        assert_ne!(derive(42, "forest"), derive(43, "forest"));
    }

    #[test]
    fn sha_hex_is_64_chars() {
        assert_eq!(sha256_hex(b"abc").len(), 64);
        assert!(sha256_hex(b"abc").starts_with("ba7816bf"));
    }
}
