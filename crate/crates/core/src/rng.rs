//! Counter-based Gaussian noise streams.
//!
//! Every stream is addressed by `(seed, domain, aux, stream)`: the first three
//! form the ChaCha key and `stream` selects the ChaCha stream id. Inside a
//! stream, draws are grouped into fixed-size blocks so that block `k` always
//! starts at the same word position. Results therefore depend only on these
//! coordinates and never on scheduling.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Key domains, kept distinct so unrelated consumers never share noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    PathInit = 1,
    PathNoise = 2,
    Residual = 3,
    GaussianSample = 4,
    JointOracle = 5,
}

const WORDS_PER_PAIR: u128 = 4;

/// Standard normal generator over one ChaCha stream, Box–Muller based.
#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    block: usize,
}

impl NormalStream {
    /// `block` is the number of normals drawn per [`fill_block`](Self::fill_block) call.
    pub fn new(seed: u64, domain: Domain, aux: u64, stream: u64, block: usize) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
        key[16..24].copy_from_slice(&aux.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        Self {
            rng,
            block: block.max(1),
        }
    }

    fn pairs_per_block(&self) -> u128 {
        self.block.div_ceil(2) as u128
    }

    /// Positions the stream at the start of block `index`.
    pub fn seek_block(&mut self, index: u64) {
        self.rng
            .set_word_pos(index as u128 * self.pairs_per_block() * WORDS_PER_PAIR);
    }

    /// Draws exactly one block of standard normals into `out` (`out.len()`
    /// must equal the block size). An odd block discards the last spare.
    pub fn fill_block(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.block);
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let (a, b) = self.pair();
            chunk[0] = a;
            if chunk.len() > 1 {
                chunk[1] = b;
            }
        }
    }

    fn unit_open(&mut self) -> f64 {
        // (0, 1]: never zero so the logarithm stays finite.
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    fn pair(&mut self) -> (f64, f64) {
        let u1 = self.unit_open();
        let u2 = self.unit_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}
