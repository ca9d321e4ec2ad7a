//! Deterministic RNG streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream derived from the
//! root seed, a domain tag and an index, so that results do not depend on the
//! order (or thread) in which series and epochs are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod domain {
    pub const SERIES: u64 = 0x5345_5249_4553;
    pub const VALIDATION: u64 = 0x0056_414c_4944;
    pub const EPOCH: u64 = 0x0045_504f_4348;
    pub const INIT: u64 = 0x494e_4954;
    pub const EVAL: u64 = 0x4556_414c;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for `(root_seed, domain, index)`.
pub fn derive_rng(root_seed: u64, domain: u64, index: u64) -> StreamRng {
    let key = splitmix64(root_seed ^ splitmix64(domain));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
