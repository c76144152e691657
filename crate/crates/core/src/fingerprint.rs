//! Content fingerprints used to tie artifacts (datasets, configs, ensembles)
//! together across files and reruns.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Incremental SHA-256 hasher for structured content.
///
/// Floats are hashed by their IEEE-754 bit pattern so fingerprints are exact,
/// not formatting-dependent.
pub struct Fingerprinter {
    hasher: Sha256,
}

impl Fingerprinter {
    pub fn new(tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        Fingerprinter { hasher }
    }

    pub fn push_u64(&mut self, v: u64) {
        self.hasher.update(v.to_le_bytes());
    }

    pub fn push_f64(&mut self, v: f64) {
        self.hasher.update(v.to_bits().to_le_bytes());
    }

    pub fn push_f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.push_f64(v);
        }
    }

    pub fn push_str(&mut self, s: &str) {
        self.push_u64(s.len() as u64);
        self.hasher.update(s.as_bytes());
    }

    pub fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

/// Fingerprint of any serializable value via its canonical JSON encoding.
///
/// Struct fields serialize in declaration order, so this is deterministic for
/// the config types used throughout the crate.
pub fn json_fingerprint<T: serde::Serialize>(value: &T) -> String {
    let encoded = serde_json::to_string(value).expect("fingerprinted types always serialize");
    sha256_hex(encoded.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_across_calls() {
        let a = sha256_hex(b"dbvar");
        let b = sha256_hex(b"dbvar");
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn float_bits_distinguish_negative_zero() {
        let mut f1 = Fingerprinter::new("t");
        f1.push_f64(0.0);
        let mut f2 = Fingerprinter::new("t");
        f2.push_f64(-0.0);
        assert_ne!(f1.finish(), f2.finish());
    }
}
