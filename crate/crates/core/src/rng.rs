//! Reproducible per-trial random streams.
//!
//! Every Monte-Carlo trial draws from its own ChaCha8 stream. The 64-bit key
//! is `splitmix64(seed ^ splitmix64(tag))` and the ChaCha stream id is the
//! trial index, so a trial's samples depend only on `(seed, tag, index)` and
//! never on scheduling. ChaCha8 output is specified bit-for-bit by
//! `rand_chacha`, which keeps CSV outputs identical across machines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for trial `index` of the experiment family identified by `tag`.
pub fn trial_rng(seed: u64, tag: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)));
    rng.set_stream(index);
    rng
}

/// Stable 64-bit FNV-1a hash, used to turn descriptive labels into stream tags
/// and configuration fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
