//! Named random sub-streams derived from a single 64-bit seed.
//!
//! Every consumer of randomness asks for a stream by purpose plus optional
//! coordinates (fold, cell, sequence index), so results never depend on the
//! order in which unrelated components draw numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Corpus,
    Init,
    Shuffle,
    Perturb,
    Split,
    Baseline,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Corpus => 0x636f_7270,
            Stream::Init => 0x696e_6974,
            Stream::Shuffle => 0x7368_7566,
            Stream::Perturb => 0x7065_7274,
            Stream::Split => 0x7370_6c74,
            Stream::Baseline => 0x6261_7365,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the seed, stream tag and coordinates into one 64-bit sub-seed.
pub fn derive_seed(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream.tag()));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x51_7cc1_b727_220a)));
    }
    h
}

pub fn substream(seed: u64, stream: Stream, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, coords))
}
