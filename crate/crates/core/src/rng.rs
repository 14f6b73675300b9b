//! Deterministic RNG construction. Every run owns one seed; fixed stream
//! offsets keep encoder init, batch sampling, and probe selection independent
//! so changing one never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_SAMPLER: u64 = 1;
pub(crate) const STREAM_PROBE: u64 = 2;

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
