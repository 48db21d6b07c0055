//! Hash codes for episodic buffers and lifelong counts.
//!
//! Discrete inputs (observations, panoramas, positions) go through a fixed
//! 64-bit FNV-1a over their canonical byte serialization, so codes are stable
//! across processes and platforms. Real-valued inputs go through [`SimHasher`],
//! a random-hyperplane sign hash.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HashCode(pub u64);

impl std::fmt::Display for HashCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Values with a canonical little-endian byte layout.
pub trait CanonicalBytes {
    fn write_canonical(&self, out: &mut Vec<u8>);
}

impl CanonicalBytes for [u8] {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self);
    }
}

/// Incremental FNV-1a, 64-bit.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET)
    }
}

impl Fnv1a {
    #[inline]
    pub fn update(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        self.0 = h;
    }

    pub fn finish(self) -> HashCode {
        HashCode(self.0)
    }
}

pub fn hash_bytes(bytes: &[u8]) -> HashCode {
    let mut h = Fnv1a::default();
    h.update(bytes);
    h.finish()
}

/// Exact hash of any canonically serializable value.
pub fn exact_hash<T: CanonicalBytes + ?Sized>(value: &T) -> HashCode {
    let mut buf = Vec::with_capacity(640);
    value.write_canonical(&mut buf);
    hash_bytes(&buf)
}

/// A SimHash code; bit `i` of the code is stored in `bits[i / 64] >> (i % 64)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitCode {
    len: usize,
    words: Vec<u64>,
}

impl BitCode {
    fn zeros(len: usize) -> Self {
        BitCode {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn hamming(&self, other: &BitCode) -> u32 {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    /// Folds the code into a [`HashCode`] for storage in buffers and counters.
    pub fn to_hash_code(&self) -> HashCode {
        let mut h = Fnv1a::default();
        h.update(&(self.len as u64).to_le_bytes());
        for w in &self.words {
            h.update(&w.to_le_bytes());
        }
        h.finish()
    }
}

/// Random-hyperplane sign hash over real vectors.
#[derive(Debug, Clone)]
pub struct SimHasher {
    dim: usize,
    bits: usize,
    seed: u64,
    // row-major, `bits` rows of length `dim`
    projections: Vec<f64>,
}

impl SimHasher {
    pub const DEFAULT_BITS: usize = 50;

    pub fn new(dim: usize, bits: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projections = (0..dim * bits)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        SimHasher {
            dim,
            bits,
            seed,
            projections,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self, i: usize) -> &[f64] {
        &self.projections[i * self.dim..(i + 1) * self.dim]
    }

    /// Bit `i` is set iff the projection onto row `i` is `>= 0`.
    pub fn simhash(&self, v: &[f64]) -> Result<BitCode> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        let mut code = BitCode::zeros(self.bits);
        for i in 0..self.bits {
            let dot: f64 = self.projection(i).iter().zip(v).map(|(p, x)| p * x).sum();
            if dot >= 0.0 {
                code.set(i);
            }
        }
        Ok(code)
    }
}
