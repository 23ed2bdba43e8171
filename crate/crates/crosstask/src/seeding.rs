//! Deterministic seed derivation.
//!
//! Every randomized stage (splits, subsampling, corpus synthesis) derives its
//! own stream from a base seed plus a stage tag, so reordering stages or
//! classes never changes the draws another stage sees.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tags` into `seed`, one mixing round per tag.
pub(crate) fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = mix(seed);
    for &tag in tags {
        state = mix(state ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    state
}

pub(crate) const TAG_SPLIT: u64 = 1;
pub(crate) const TAG_SAMPLE: u64 = 2;
pub(crate) const TAG_SYNTH: u64 = 3;
pub(crate) const TAG_RUN: u64 = 4;
