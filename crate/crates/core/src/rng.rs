//! Reproducible random streams.
//!
//! Every replicate gets its own ChaCha8 stream: the key is derived from the
//! master seed and an experiment tag, the stream index is the replicate
//! index. Results therefore do not depend on how replicates are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Key for a sub-experiment: `master + tag * golden`, mixed with splitmix64.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master.wrapping_add(tag.wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `replicate` of the generator keyed by `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// A generator statistically independent of `parent`, seeded from its output.
pub fn child_rng(parent: &mut SimRng) -> SimRng {
    use rand::Rng;
    ChaCha8Rng::seed_from_u64(parent.random())
}
