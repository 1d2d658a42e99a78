//! Reproducible random substreams.
//!
//! Every (seed, run, mode) triple maps to its own ChaCha8 stream: the key is
//! derived from the seed and the 64-bit stream id packs the run and mode
//! indices. Streams never overlap, so work can be scheduled in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub run: u32,
    pub mode: u32,
}

impl StreamKey {
    pub fn new(seed: u64, run: usize, mode: usize) -> Self {
        Self {
            seed,
            run: u32::try_from(run).expect("run index exceeds u32"),
            mode: u32::try_from(mode).expect("mode index exceeds u32"),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.run as u64) << 32) | self.mode as u64);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = StreamKey::new(7, 3, 1).rng().random();
        let b: u64 = StreamKey::new(7, 3, 1).rng().random();
        let c: u64 = StreamKey::new(7, 3, 2).rng().random();
        let d: u64 = StreamKey::new(7, 4, 1).rng().random();
        let e: u64 = StreamKey::new(8, 3, 1).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
