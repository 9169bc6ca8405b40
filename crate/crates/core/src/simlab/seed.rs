//! Counter-based seed derivation.
//!
//! A replication seed depends only on (master seed, index, label), so the
//! order in which workers pick up replications cannot change any draw.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer, a bijection on u64.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a of the label bytes.
pub fn label_hash(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// `mix64(mix64(master ^ fnv1a(label)) + index·φ)` where φ is the 64-bit
/// golden-ratio constant.
///
/// For a fixed (master, label) the map index ↦ seed is injective: φ is odd,
/// so index·φ is a bijection mod 2⁶⁴, as are the addition and `mix64`.
pub fn derive_seed(master_seed: u64, replication_index: u64, stream_label: &str) -> u64 {
    let base = mix64(master_seed ^ label_hash(stream_label));
    mix64(base.wrapping_add(replication_index.wrapping_mul(GOLDEN)))
}
