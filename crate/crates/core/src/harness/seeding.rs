use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one batch and purpose.
///
/// Every batch gets its own ChaCha stream derived from the batch index, so
/// results do not depend on which worker runs which batch.
pub fn batch_rng(seed: u64, batch: u64, purpose: u64, calibration: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = if calibration { 1u64 << 62 } else { 0 };
    rng.set_stream(tag | (batch << 4) | (purpose & 0xf));
    rng
}

pub(crate) const LAYOUT: u64 = 0;
pub(crate) const PILOTS: u64 = 1;
pub(crate) const BOOTSTRAP: u64 = 2;
