use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Stream salts so that the generator, the noise model and the trainer never
// share a ChaCha key even when configured with the same seed.
pub(crate) const SCENE_SALT: u64 = 0x5CE7_E000_0000_0001;
pub(crate) const NOISE_SALT: u64 = 0x0015_E000_0000_0002;
pub(crate) const TRAIN_SALT: u64 = 0x7EA1_7000_0000_0003;

/// Independent, platform-stable stream for `(seed, index)`.
pub(crate) fn stream(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(index);
    rng
}
