//! Deterministic sub-seed derivation.
//!
//! Every random choice in the crate flows from one master seed. Sub-seeds are
//! derived by mixing the master seed with a label and an index, so results do
//! not depend on the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `master`, a purpose label and an index.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps this stable across platforms and toolchains.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(mix(master ^ h).wrapping_add(index))
}

/// Seeded generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
