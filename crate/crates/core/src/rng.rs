//! Deterministic random streams.
//!
//! Every random consumer (a particle, a diffusion path) owns a ChaCha8
//! stream keyed by `(master seed, replicate, id)`, so draws do not depend on
//! the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `id` inside `replicate` of a run seeded with `seed`.
pub fn stream(seed: u64, replicate: u64, id: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(replicate.wrapping_add(0xA5A5_A5A5)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(id);
    rng
}
