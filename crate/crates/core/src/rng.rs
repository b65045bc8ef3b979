//! Deterministic random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream addressed by
//! `(root seed, purpose, index)`. ChaCha is counter based, so each particle
//! owns an independent stream and results do not depend on how the work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Minibatch = 2,
    Noise = 3,
    /// Shared per-epoch draws (SVRG snapshot lag, SVRG+ anchor batch).
    Epoch = 4,
    Data = 5,
    Split = 6,
    Subsample = 7,
    Diagnostics = 8,
}

/// Opens the stream for `(seed, purpose, index)`. `index` must fit in 48 bits.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// SplitMix64 finalizer; used to derive child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed derivation from a root seed and a label (FNV-1a over the label).
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(mix64(root ^ h).wrapping_add(index))
}
