//! Small shared helpers: stable seed derivation, hashing and interning.

use std::collections::HashSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Shared, immutable string used for nominal values.
pub type Sym = Arc<str>;

/// Derives a child seed from `(seed, stage, index)`.
///
/// The mapping is a truncated SHA-256 so it is stable across platforms and
/// compiler versions, unlike `std::hash`.
pub fn derive_seed(seed: u64, stage: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// A ChaCha stream private to `(seed, stage, index)`.
pub fn stream(seed: u64, stage: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stage, index))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `ceil(fraction * m)` clamped to `1..=m`, tolerant of float noise such as
/// `0.1 * 10 = 1.0000000000000002`.
pub fn ceil_share(fraction: f64, m: usize) -> usize {
    if m == 0 {
        return 0;
    }
    let raw = (fraction * m as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(m)
}

/// Deduplicating string pool so that repeated nominal values share storage.
#[derive(Debug, Default)]
pub struct Interner {
    pool: HashSet<Sym>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Sym {
        if let Some(existing) = self.pool.get(s) {
            return existing.clone();
        }
        let sym: Sym = Arc::from(s);
        self.pool.insert(sym.clone());
        sym
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Scales `values` in place to sum to one; an all-zero vector becomes uniform.
pub fn normalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 && total.is_finite() {
        for v in values.iter_mut() {
            *v /= total;
        }
    } else if !values.is_empty() {
        let u = 1.0 / values.len() as f64;
        values.iter_mut().for_each(|v| *v = u);
    }
}

/// Entropy in bits of a vector of non-negative weights.
pub fn entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.log2();
        }
    }
    h.max(0.0)
}
