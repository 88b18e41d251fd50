//! Deterministic stream derivation.
//!
//! Every stochastic routine in this crate draws from a `ChaCha8Rng` whose
//! 64-bit seed is derived from a root seed and a path of tags. Folding a tag
//! is a SplitMix64 step over `seed ^ tag`, so distinct paths give
//! independent-looking streams while the same path always reproduces the
//! same draws, regardless of evaluation order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output step.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag)
}

/// Derive a child seed from a path of tags, folding left to right.
pub fn derive_path(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |s, &t| derive(s, t))
}

/// Stream for a tag path rooted at `seed`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_path(seed, tags))
}

/// Role tags. Kept stable: changing one silently changes every experiment
/// keyed through it.
pub mod tag {
    pub const SIMULATE: u64 = 0x01;
    pub const SMC: u64 = 0x02;
    pub const LHS: u64 = 0x03;
    pub const SKBO_EVAL: u64 = 0x04;
    pub const BOOTSTRAP: u64 = 0x05;
    pub const REPLICATE: u64 = 0x06;
    pub const TRANSITION: u64 = 0x07;
    pub const CANDIDATE: u64 = 0x08;
}
