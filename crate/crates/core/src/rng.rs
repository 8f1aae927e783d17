use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha streams per consumer so that, for example, changing the
/// split does not perturb model initialization under the same seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Synth = 1,
    Split = 2,
    Init = 3,
    Batches = 4,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Batch streams are further keyed by epoch.
pub(crate) fn seeded_epoch(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((Stream::Batches as u64) << 32) | epoch as u64);
    rng
}
