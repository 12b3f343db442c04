//! Deterministic seed derivation.
//!
//! A single master seed fans out to per-stage seeds so each pipeline stage
//! (scene synthesis, sampling, augmentation, each trainer) is individually
//! reproducible. The rule is fixed: FNV-1a over the stage tag, mixed into the
//! master seed, then finalized with SplitMix64.

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the seed for a named stage from the master seed.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()))
}

/// Derive a seed that additionally depends on an integer payload, e.g. an
/// epoch counter or a sampling rate in basis points.
pub fn derive_seed_n(master: u64, tag: &str, n: u64) -> u64 {
    splitmix64(derive_seed(master, tag) ^ splitmix64(n))
}
