//! Content hashing used for split assignment, dataset checksums and cache
//! keys.

use alloc::string::String;
use core::fmt::Write;

use sha2::{Digest, Sha256};

/// Incremental SHA-256 with length-prefixed fields, so that field
/// boundaries are unambiguous.
#[derive(Clone, Default)]
pub struct ContentHasher {
    inner: Sha256,
}

impl ContentHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        self.inner.update((data.len() as u64).to_le_bytes());
        self.inner.update(data);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(&mut self, x: u64) -> &mut Self {
        self.inner.update(x.to_le_bytes());
        self
    }

    pub fn f64(&mut self, x: f64) -> &mut Self {
        self.u64(x.to_bits())
    }

    pub fn finish(self) -> [u8; 32] {
        self.inner.finalize().into()
    }

    pub fn finish_hex(self) -> String {
        to_hex(&self.finish())
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{:02x}", b);
    }
    out
}

/// Deterministically map `(domain, seed, key)` to a float in `[0, 1)`.
pub fn unit_interval(domain: &str, seed: u64, key: &str) -> f64 {
    let mut h = ContentHasher::new();
    h.str(domain).u64(seed).str(key);
    let digest = h.finish();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    let x = u64::from_le_bytes(word) >> 11;
    x as f64 / (1u64 << 53) as f64
}
