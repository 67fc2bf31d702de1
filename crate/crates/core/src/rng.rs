use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Seeded random stream. Equal seeds and equal call sequences give equal
/// outputs; independent purposes (batch sampling, noise, initialization)
/// use separate streams obtained with [`RngState::stream`].
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

pub mod streams {
    pub const INIT: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const DATA: u64 = 5;
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// A fresh stream sharing this state's seed.
    pub fn stream(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn inner(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}
