//! Deterministic random streams.
//!
//! Every experiment derives a base key from `(seed, label)` and then one
//! ChaCha8 stream per replicate index, so replicates are independent of the
//! number of worker threads and of the order in which they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer, used to spread seeds and labels over 64 bits.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a textual label into a new 64-bit key.
pub fn derive_key(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(seed ^ mix(h))
}

/// The random stream for replicate `index` under `key`.
pub fn stream(key: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Shorthand for `stream(derive_key(seed, label), index)`.
pub fn labeled_stream(seed: u64, label: &str, index: u64) -> SimRng {
    stream(derive_key(seed, label), index)
}
