//! Counter-based seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value derived from the root seed and a path of integers, e.g.
//! `(root, [PASSES_TEST, pass_index])`. Derivation is a SplitMix64 chain:
//!
//! ```text
//! s = mix(root); for each p in path: s = mix(s ^ mix(p + GOLDEN))
//! ```
//!
//! so streams depend only on their path, never on the order in which
//! they are requested. The scheme uses only wrapping 64-bit arithmetic and
//! is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

// Path tags. Values are part of the on-disk reproducibility contract.
pub const SPLIT: u64 = 1;
pub const TRAIN: u64 = 2;
pub const INIT: u64 = 3;
pub const PASSES_CALIBRATION: u64 = 4;
pub const PASSES_TEST: u64 = 5;
pub const FOREST: u64 = 6;
pub const TREE: u64 = 7;
pub const FOLDS: u64 = 8;
pub const RUN: u64 = 9;
pub const RETRY: u64 = 10;
pub const SYNTHETIC: u64 = 11;
pub const STRICT_CALIBRATION: u64 = 12;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a path of counters.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(root), |s, &p| mix(s ^ mix(p.wrapping_add(GOLDEN))))
}

/// A generator for the stream at `(root, path)`.
pub fn stream(root: u64, path: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive(root, path))
}
