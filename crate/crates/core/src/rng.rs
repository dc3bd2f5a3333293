//! Seeded, portable pseudorandom generator (ChaCha8) with a serializable state.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, ShtError};
use crate::tensor::{DenseMatrix, Real};

/// Byte length of [`Rng::state_bytes`].
pub const RNG_STATE_LEN: usize = 32 + 8 + 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream derived from this generator's seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(self.inner.get_seed());
        inner.set_stream(self.inner.get_stream().wrapping_add(stream.wrapping_add(1)));
        Self { inner }
    }

    /// Uniform integer in `[0, n)`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform real in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal_matrix<T: Real>(&mut self, rows: usize, cols: usize, std: f64) -> DenseMatrix<T> {
        DenseMatrix::from_fn(rows, cols, |_, _| T::of(self.normal() * std))
    }

    pub fn uniform_matrix<T: Real>(&mut self, rows: usize, cols: usize, bound: f64) -> DenseMatrix<T> {
        DenseMatrix::from_fn(rows, cols, |_, _| T::of((2.0 * self.uniform() - 1.0) * bound))
    }

    /// seed (32) ‖ stream (u64 LE) ‖ word position (u128 LE).
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RNG_STATE_LEN);
        out.extend_from_slice(&self.inner.get_seed());
        out.extend_from_slice(&self.inner.get_stream().to_le_bytes());
        out.extend_from_slice(&self.inner.get_word_pos().to_le_bytes());
        out
    }

    pub fn from_state_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != RNG_STATE_LEN {
            return Err(ShtError::Checkpoint(format!(
                "rng state must be {RNG_STATE_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        let stream = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let pos = u128::from_le_bytes(bytes[40..56].try_into().unwrap());
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(stream);
        inner.set_word_pos(pos);
        Ok(Self { inner })
    }
}
