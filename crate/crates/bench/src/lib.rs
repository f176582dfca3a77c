//! Fixtures shared by the benchmarks in `benches/`.

use icbell::nsbox::{random_mixture_box, random_profile, BoxDistribution, GuessingProfile};
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Deterministic batch of random profiles.
pub fn profiles(d: usize, count: usize, seed: u64) -> Vec<GuessingProfile> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_profile(d, &mut rng).expect("d >= 2"))
        .collect()
}

pub fn mixture_box(d: usize, seed: u64) -> BoxDistribution {
    random_mixture_box(d, &mut StdRng::seed_from_u64(seed)).expect("d >= 2")
}
