//! Counter-keyed random streams: every (seed, domain, tick) triple maps to an
//! independent ChaCha stream, so parallel work reproduces regardless of order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ACTUATOR: u64 = 1;
pub const RENDER: u64 = 2;
pub const SENSOR_NOISE: u64 = 3;
pub const PLANNER: u64 = 4;
pub const SURFACE: u64 = 5;
pub const SEQUENCE: u64 = 6;

/// Generator for one `(seed, domain, tick)` key.
pub fn keyed(seed: u64, domain: u64, tick: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(tick);
    rng
}

/// A 64-bit seed for a sub-task, drawn from its own key.
pub fn derive(seed: u64, domain: u64, tick: u64) -> u64 {
    use rand::RngCore;
    keyed(seed, domain, tick).next_u64()
}
