//! Dense statevector simulation and the circuits built on it.

mod arith;
mod circuit;
mod overlap;
mod state;

pub use arith::{iqft, qft, subtract_basis, subtractor, FixedDifference, FixedPoint};
pub use circuit::{Circuit, Gate};
pub use overlap::{
    inner_product_norms, overlap_test, prepare_amplitude_state, qram_neighbor_state, quantum_knn, Shots,
};
pub use state::{bitstring, MeasurementRecord, StateVector};
