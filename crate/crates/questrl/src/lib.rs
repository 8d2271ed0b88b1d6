//! A deterministic, seedable simulator for a multistage cooperative quest
//! card game, a from-scratch online actor-critic learner over masked feature
//! encodings, curriculum training strategies, and an evaluation harness.

pub mod agents;
pub mod cards;
pub mod curriculum;
pub mod decoders;
pub mod encoders;
pub mod engine;
pub mod harness;
pub mod neural;
pub mod sim;

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a path of stream
/// identifiers. Deterministic, order-sensitive, and collision-resistant
/// enough for seeding parallel workers.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut acc = mix(master);
    for &p in parts {
        acc = mix(acc ^ mix(p));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_path_sensitive() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_ne!(derive_seed(1, &[]), derive_seed(1, &[0]));
    }
}
