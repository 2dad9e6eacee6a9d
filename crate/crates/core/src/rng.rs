//! Seeded random streams.
//!
//! Every stochastic quantity draws from ChaCha8 seeded by a 64-bit seed and
//! a role tag selecting the ChaCha stream, so results are reproducible across
//! machines and independent of scheduling order. Gaussian variates come from
//! `rand_distr::StandardNormal` (ziggurat over uniform draws).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Role tags keep independent uses of the same seed on disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    SchroederCarrier = 1,
    BandNoise = 2,
    WeightInit = 3,
    Shuffle = 4,
    Dropout = 5,
    Split = 6,
    Utterance = 7,
}

pub fn stream(seed: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

/// Mixes a list of integers into one seed (SplitMix64 finalizer per step).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    StandardNormal.sample_iter(rng).take(len).collect()
}
