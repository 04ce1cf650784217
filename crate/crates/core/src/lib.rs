//! Simulated quantum locally linear embedding.
//!
//! The crate contains an exact classical LLE used as a reference, a small
//! statevector simulator with the circuits the quantum pipelines need, a
//! gate-level HHL solver, density-matrix-exponentiation PCA and a variational
//! pipeline. Everything runs on dense matrices at desk scale.

pub mod datasets;
pub mod error;
pub mod hhl;
pub mod linalg;
pub mod lle;
pub mod metrics;
pub mod pipeline;
pub mod qpca;
pub mod qsim;
pub mod vqlle;

pub use datasets::DataMatrix;
pub use error::{QlleError, Result};
pub use lle::{EmbeddingMatrix, NeighborGraph, WeightMatrix};
pub use linalg::{DensityOperator, EigenDecomposition, Hermitian, C64, CMatrix, CVector};
