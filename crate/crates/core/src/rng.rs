//! Deterministic random streams.
//!
//! Every stochastic routine takes a user seed and derives one independent
//! ChaCha stream per work item, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream for work item `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream for a two-level work item (e.g. grid point, replicate).
pub fn stream2(seed: u64, outer: u64, inner: u64) -> ChaCha8Rng {
    stream(seed ^ outer.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15), inner)
}

/// Uniform draw on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
