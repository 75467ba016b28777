//! Deterministic sub-seed derivation so every randomized stage draws from its
//! own stream, keyed by the master seed plus a stage label.

/// FNV-1a over the base seed bytes and the tag strings. Stable across runs and
/// platforms; collisions are harmless (streams would merely coincide).
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x1_0000_0000_01b3;
    let mut h = OFFSET;
    for b in base.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    for tag in tags {
        for b in tag.as_bytes() {
            h = (h ^ u64::from(*b)).wrapping_mul(PRIME);
        }
        // Separator byte so ("ab","c") and ("a","bc") hash differently.
        h = (h ^ 0xff).wrapping_mul(PRIME);
    }
    h
}
