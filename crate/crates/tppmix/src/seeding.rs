//! Deterministic seed derivation.
//!
//! Every parallel or per-item random stream in the crate is seeded from the
//! run seed through the rules here, which is what makes reruns bit-identical
//! regardless of worker count or dataset file order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-sequence stream: `base ⊕ index`, expanded by the generator's own
/// seed-spreading. Sequence `index` is the stable record id, not the file
/// position.
pub fn sequence_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

/// Independent stage streams (shuffling, per-cluster training, trials…):
/// a splitmix64 round over the base xored with a tagged odd multiplier.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator used throughout the crate.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
