//! Seeded random streams.
//!
//! Every stream is a ChaCha8 keystream (`rand_chacha::ChaCha8Rng`) keyed by
//! `seed_from_u64(seed)` with a 64-bit stream id selecting the purpose. The
//! key expansion, the stream cipher and the float conversions below are all
//! platform independent, so a given `(seed, stream)` pair yields the same
//! sequence everywhere. The full state is `(seed, stream, word_pos)`, which is
//! what checkpoints store.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;

/// Purpose of a random stream. Distinct purposes never share keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Default,
    Init,
    Data,
    Shuffle,
    /// Per-video stream for dataset generation; `split` 0/1/2 = train/val/test.
    Video {
        split: u8,
        index: u32,
    },
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Default => 0,
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::Shuffle => 3,
            Stream::Video { split, index } => (1 << 63) | ((split as u64) << 32) | index as u64,
        }
    }
}

/// Serializable snapshot of an [`Rng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// ChaCha word position, as a decimal string (it is a 128-bit counter).
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, Stream::Default)
    }

    pub fn stream(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        Self { seed, inner }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(state.seed);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        Self {
            seed: state.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (ziggurat).
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| self.normal() * std).collect();
        Matrix::new(rows, cols, data).expect("finite normal draws")
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, limit: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| self.uniform_range(-limit, limit)).collect();
        Matrix::new(rows, cols, data).expect("finite uniform draws")
    }
}
