//! Shared fixtures for the benchmarks.

use cccb::linalg::RidgeState;
use cccb::{EnvironmentInstance, FeatureVector, GeneratorConfig};

/// Desk-scale instance: 20 arms, d = 5, K = 2.
pub fn desk_instance(seed: u64) -> EnvironmentInstance {
    EnvironmentInstance::generate(GeneratorConfig::new(20, 5, 2), seed).expect("desk instance")
}

/// Ridge state after `n` ingests of a fixed pseudo-random sequence.
pub fn warmed_state(dim: usize, n: usize) -> RidgeState {
    let mut state = RidgeState::new(dim, dim as f64, (dim as f64).sqrt(), 0.1).expect("valid parameters");
    for i in 0..n {
        let x = feature(dim, i);
        state.ingest(&x, 0.5).expect("finite input");
    }
    state
}

/// Deterministic feature in `[−1, 1]^dim`.
pub fn feature(dim: usize, i: usize) -> FeatureVector {
    FeatureVector::new((0..dim).map(|j| (((i * 31 + j * 17) % 97) as f64 / 48.5) - 1.0).collect())
}
