//! Interference-based overlap estimation, amplitude encoding and the
//! distance and neighbor-register primitives built on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{ensure, Result};
use crate::linalg::{c, partial_trace, CMatrix, CVector, DensityOperator, Subsystem};
use crate::lle::NeighborGraph;
use crate::qsim::circuit::{Circuit, Gate};
use crate::qsim::state::StateVector;

/// How measurement probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Shots {
    /// Analytic probabilities.
    #[default]
    Exact,
    /// Binomial sampling with a fixed seed.
    Sampled { shots: u64, seed: u64 },
}

impl Shots {
    /// `0` means exact.
    pub fn from_count(shots: u64, seed: u64) -> Self {
        if shots == 0 {
            Shots::Exact
        } else {
            Shots::Sampled { shots, seed }
        }
    }

    fn estimate(&self, p: f64, stream: u64) -> f64 {
        match *self {
            Shots::Exact => p,
            Shots::Sampled { shots, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let hits = Binomial::new(shots, p.clamp(0.0, 1.0))
                    .expect("probability clamped into [0, 1]")
                    .sample(&mut rng);
                hits as f64 / shots as f64
            }
        }
    }
}

/// Prepares `(|0>|x> + |1>|y>)/sqrt(2)` with the ancilla as the top qubit,
/// applies a Hadamard to the ancilla and returns `P(ancilla = 0)`, which
/// equals `1/2 + Re<x|y>/2`.
pub fn overlap_test(x: &StateVector, y: &StateVector, shots: Shots) -> Result<f64> {
    overlap_test_stream(x, y, shots, 0)
}

fn overlap_test_stream(x: &StateVector, y: &StateVector, shots: Shots, stream: u64) -> Result<f64> {
    ensure!(
        x.qubits() == y.qubits(),
        "overlap test needs equal registers, got {} and {} qubits",
        x.qubits(),
        y.qubits()
    );
    let n = x.dim();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = CVector::zeros(2 * n);
    for i in 0..n {
        amps[i] = x.amplitude(i) * s;
        amps[n + i] = y.amplitude(i) * s;
    }
    let prepared = StateVector::new(amps)?;
    let ancilla = x.qubits();
    let mut circ = Circuit::new(ancilla + 1);
    circ.push(Gate::H(ancilla))?;
    let p0 = circ.apply(&prepared)?.prob_zero(ancilla);
    Ok(shots.estimate(p0, stream))
}

/// Amplitude encoding of `v`, zero-padded to a power of two, together with
/// the norm needed to undo the normalization.
pub fn prepare_amplitude_state(v: &[f64]) -> Result<(StateVector, f64)> {
    ensure!(!v.is_empty(), "cannot encode an empty vector");
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    ensure!(norm > 0.0, "cannot amplitude-encode the zero vector");
    let len = v.len().next_power_of_two();
    let amps = CVector::from_fn(len, |i, _| c(v.get(i).copied().unwrap_or(0.0) / norm, 0.0));
    Ok((StateVector::normalized(amps)?, norm))
}

/// Squared Euclidean distance `|x_i|^2 + |x_j|^2 - (4 P(0) - 2)|x_i||x_j|`
/// with `P(0)` from the overlap test on the normalized encodings.
pub fn inner_product_norms(xi: &[f64], xj: &[f64], shots: Shots) -> Result<f64> {
    inner_product_norms_stream(xi, xj, shots, 0)
}

fn inner_product_norms_stream(xi: &[f64], xj: &[f64], shots: Shots, stream: u64) -> Result<f64> {
    ensure!(xi.len() == xj.len(), "vectors have different lengths");
    let (si, ni) = prepare_amplitude_state(xi)?;
    let (sj, nj) = prepare_amplitude_state(xj)?;
    let p0 = overlap_test_stream(&si, &sj, shots, stream)?;
    Ok(ni * ni + nj * nj - (4.0 * p0 - 2.0) * ni * nj)
}

/// The neighbor-difference register of point `i` and its reduced operator.
///
/// The state is `sum_{j,m} (x_{m i} - x_{m n_j}) |j>|m>` normalized, with the
/// neighbor slot `j` as the high register and the coordinate `m` as the low
/// one, each padded to a power of two. Tracing out `m` leaves `C / tr C` on
/// the neighbor slots; the returned operator is restricted to the `k` real
/// slots.
pub fn qram_neighbor_state(
    data: &DataMatrix,
    graph: &NeighborGraph,
    i: usize,
) -> Result<(StateVector, DensityOperator)> {
    ensure!(i < data.len(), "point index {i} out of range");
    let x = data.matrix();
    let idx = graph.indices(i);
    let k = idx.len();
    let dpad = data.dim().next_power_of_two();
    let kpad = k.next_power_of_two();
    let mut amps = CVector::zeros(kpad * dpad);
    for (j, &nj) in idx.iter().enumerate() {
        for m in 0..data.dim() {
            amps[j * dpad + m] = c(x[(m, i)] - x[(m, nj)], 0.0);
        }
    }
    ensure!(
        amps.norm() > 0.0,
        "all neighbors of point {i} coincide with it; the difference register is empty"
    );
    let state = StateVector::normalized(amps)?;
    let rho = state.amplitudes() * state.amplitudes().adjoint();
    let reduced = partial_trace(&rho, kpad, dpad, Subsystem::First)?;
    let block: CMatrix = reduced.view((0, 0), (k, k)).into_owned();
    Ok((state, DensityOperator::new(block)?))
}

/// Neighbor graph from overlap-estimated distances, selected with the same
/// ordering and tie rule as the classical search.
pub fn quantum_knn(data: &DataMatrix, k: usize, shots: Shots) -> Result<NeighborGraph> {
    let n = data.len();
    let cols: Vec<Vec<f64>> = (0..n).map(|i| data.point(i).iter().copied().collect()).collect();
    let norms2: Vec<f64> = cols.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
    NeighborGraph::from_distances(n, k, |i, j| {
        let (a, b) = (i.min(j), i.max(j));
        let at_origin = norms2[a] == 0.0 || norms2[b] == 0.0;
        let d2 = if at_origin {
            // The origin cannot be amplitude-encoded; its squared distance
            // to any point is that point's squared norm.
            norms2[a] + norms2[b]
        } else {
            inner_product_norms_stream(&cols[a], &cols[b], shots, (a * n + b) as u64)?
        };
        // Rounding can leave a tiny residue for coincident points; snap it
        // so duplicates tie by index as in the classical search.
        let floor = 1e-12 * (norms2[a] + norms2[b]);
        Ok(if d2.abs() <= floor { 0.0 } else { d2.max(0.0) })
    })
}
