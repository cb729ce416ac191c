use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counter-based stream keyed by `(seed, op instance, step)`.
///
/// The same key always yields the same sequence, independent of how many
/// other streams were consumed before it.
pub struct DropoutRng {
    inner: ChaCha8Rng,
}

impl DropoutRng {
    pub fn new(seed: u64, instance: u64, step: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(instance.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step);
        Self { inner }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }
}
