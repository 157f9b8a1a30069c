//! Counter-based randomness.
//!
//! Every draw is a pure function of its key, so results never depend on
//! iteration order or thread scheduling.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of labels into one 64-bit stream key. Labels are
/// length-prefixed so `("ab", "c")` and `("a", "bc")` differ.
pub fn stream_key(labels: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for label in labels {
        h = fnv1a(h, &(label.len() as u64).to_le_bytes());
        h = fnv1a(h, label.as_bytes());
    }
    h
}

/// Uniform draw in `[0, 1)` for `(seed, stream, counter)`.
pub fn uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    let x = mix64(mix64(seed ^ mix64(stream)) ^ counter.wrapping_mul(0xd1b5_4a32_d192_ed03));
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for a derived stream, for seeding conventional generators.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    mix64(seed ^ stream_key(labels))
}
