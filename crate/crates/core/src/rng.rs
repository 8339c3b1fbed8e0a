//! Seed derivation and stateless per-item coins.
//!
//! Subsampling decisions are keyed on `(seed, tag, item_id)` rather than drawn from a
//! sequential generator, so a structure built in one pass and a structure grown by
//! repeated inserts make exactly the same inclusion decisions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed from a parent seed and a tag.
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Uniform draw in `[0, 1)` determined by `(seed, key)`.
#[inline]
pub(crate) fn coin(seed: u64, key: u64) -> f64 {
    let bits = splitmix64(derive_seed(seed, key) ^ 0xA076_1D64_78BD_642F);
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
