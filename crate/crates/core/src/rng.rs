use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random generator handed out by [`RunSeed::rng`].
pub type StreamRng = ChaCha8Rng;

/// Root of every random draw in a run.
///
/// A `(seed, stream)` pair plus an index selects an independent ChaCha
/// stream, so sample `i` of a batch is the same no matter how many other
/// samples exist or in which order they are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSeed {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    let mut s = a ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut s)
}

impl RunSeed {
    pub const fn new(seed: u64) -> Self {
        RunSeed { seed, stream: 0 }
    }

    pub const fn with_stream(seed: u64, stream: u64) -> Self {
        RunSeed { seed, stream }
    }

    /// Child seed for a nested loop level (environment step, iteration, ...).
    pub fn substream(&self, index: u64) -> RunSeed {
        RunSeed {
            seed: self.seed,
            stream: mix(self.stream.wrapping_add(1), index),
        }
    }

    /// Generator for item `index` (a sample, a path, an episode).
    pub fn rng(&self, index: u64) -> StreamRng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(mix(self.stream, index));
        rng
    }
}

pub(crate) fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_key_same_stream() {
        let s = RunSeed::with_stream(42, 3);
        let mut r1 = s.rng(7);
        let mut r2 = s.rng(7);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }

    #[test]
    fn distinct_indices_and_streams_differ() {
        let s = RunSeed::new(1);
        assert_ne!(s.rng(0).next_u64(), s.rng(1).next_u64());
        assert_ne!(s.rng(0).next_u64(), s.substream(0).rng(0).next_u64());
        assert_ne!(
            RunSeed::new(1).rng(0).next_u64(),
            RunSeed::new(2).rng(0).next_u64()
        );
    }
}
