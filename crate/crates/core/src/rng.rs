//! Seed derivation. Every randomized operation takes a seed and owns its RNG;
//! sub-streams (per row, per tile, per benchmark cell) are derived with
//! `mix`, never by sharing generator state.

use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full-period bijection on u64.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive an independent sub-seed from `(seed, salt)`.
pub fn mix(seed: u64, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(salt.wrapping_add(0x517c_c1b7_2722_0a95)))
}

/// Derive a sub-seed from a seed and a label (e.g. a method name).
pub fn mix_label(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(seed, h)
}

/// Deterministic generator for a derived stream.
pub fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(mix(seed, salt))
}

/// Deterministic generator for a labelled stream.
pub fn stream_label(seed: u64, label: &str) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(mix_label(seed, label))
}

/// Hash a lattice point to a value in [-1, 1]; used by the focus-profile
/// value noise.
pub fn lattice_unit(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(i as u64 ^ (j as u64).rotate_left(32)));
    // 53 mantissa bits -> [0,1) -> [-1,1]
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}
