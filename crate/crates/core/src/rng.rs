use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based split of a master seed: every pulse index owns an
/// independent ChaCha stream, so results never depend on the worker count.
#[derive(Debug, Clone, Copy)]
pub struct StreamSplitter {
    key: [u8; 32],
}

impl StreamSplitter {
    pub fn new(seed: u64) -> Self {
        Self { key: ChaCha8Rng::seed_from_u64(seed).get_seed() }
    }

    /// Derived splitter for a named sub-experiment.
    pub fn child(&self, tag: u64) -> Self {
        let mut rng = self.stream(u64::MAX - tag);
        use rand::RngCore;
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self { key }
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
