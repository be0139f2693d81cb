//! Report provenance and serialization helpers.
//!
//! Reports carry the seed, a hash of the effective configuration, and the
//! crate version so plots and comparisons are reproducible. Timestamps are
//! supplied by the caller (the CLI) and are the only non-deterministic
//! field; everything else is bit-stable for a fixed config and build.

use serde::{Deserialize, Serialize};

/// FNV-1a hash of a canonical string rendering of a configuration.
pub fn config_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    /// Filled by the caller at write time; excluded from determinism
    /// comparisons.
    pub timestamp: String,
}

impl Provenance {
    pub fn new(seed: u64, canonical_config: &str) -> Self {
        Self {
            seed,
            config_hash: config_hash(canonical_config),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: String::new(),
        }
    }
}

/// Serializes a report to pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> crate::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash("seed=0;quick=false");
        let b = config_hash("seed=0;quick=false");
        let c = config_hash("seed=1;quick=false");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
