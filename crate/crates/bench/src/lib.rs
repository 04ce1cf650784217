//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use qlle_core::datasets::gen_s_curve;
use qlle_core::lle::{knn, local_weights, WeightConfig};
use qlle_core::{DataMatrix, WeightMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn s_curve(n: usize) -> DataMatrix {
    gen_s_curve(n, 7).expect("valid sample size")
}

pub fn s_curve_weights(n: usize, k: usize) -> WeightMatrix {
    let data = s_curve(n);
    let graph = knn(&data, k).expect("k < n");
    local_weights(&data, &graph, &WeightConfig::default()).expect("weights solve").0
}

/// Random symmetric positive semidefinite matrix with unit trace.
pub fn random_density(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let m = &g * g.transpose();
    &m / m.trace()
}
