//! Deterministic seed derivation.

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over `label`, stable across platforms and releases.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for stream `label`, replication `index`, under `base`. Streams with
/// different labels never share draws, so adding a policy to an experiment
/// leaves every other policy's randomness untouched.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(base ^ label_hash(label)).wrapping_add(mix64(index)))
}

/// Uniform value in `[0, 1)` determined by `(seed, key)`.
pub fn unit_hash(seed: u64, key: u64) -> f64 {
    (mix64(seed ^ mix64(key)) >> 11) as f64 / (1u64 << 53) as f64
}
