use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{ensure, Result};
use crate::linalg::{c, CVector, C64};

const NORM_TOL: f64 = 1e-12;

/// Amplitudes of a `q`-qubit register. Qubit `p` is bit `p` of the basis
/// index (little-endian).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: CVector,
}

impl StateVector {
    pub fn new(amps: CVector) -> Result<Self> {
        let len = amps.len();
        ensure!(len.is_power_of_two(), "state length {len} is not a power of two");
        let norm = amps.norm();
        ensure!(
            (norm - 1.0).abs() <= NORM_TOL * len.max(1) as f64,
            "state is not normalized (norm {norm})"
        );
        Ok(StateVector {
            qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    /// Normalizes `amps` first; fails on the zero vector.
    pub fn normalized(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        ensure!(norm > 0.0, "cannot normalize the zero vector");
        Self::new(amps.unscale(norm))
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        ensure!(index < 1usize << qubits, "basis index {index} out of range for {qubits} qubits");
        let mut amps = CVector::zeros(1 << qubits);
        amps[index] = c(1.0, 0.0);
        Ok(StateVector { qubits, amps })
    }

    pub fn zero(qubits: usize) -> Self {
        Self::basis(qubits, 0).expect("index 0 always valid")
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn amplitude(&self, i: usize) -> C64 {
        self.amps[i]
    }

    pub(crate) fn amps_mut(&mut self) -> &mut CVector {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// Tensor product with `high` occupying the more significant qubits.
    pub fn tensor(low: &StateVector, high: &StateVector) -> StateVector {
        StateVector {
            qubits: low.qubits + high.qubits,
            amps: high.amps.kronecker(&low.amps),
        }
    }

    /// Probability that `qubit` reads 0.
    pub fn prob_zero(&self, qubit: usize) -> f64 {
        let mask = 1usize << qubit;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn measurement(&self) -> MeasurementRecord {
        let mut probabilities = BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                probabilities.insert(bitstring(i, self.qubits), p);
            }
        }
        MeasurementRecord {
            probabilities,
            counts: None,
            shots: None,
        }
    }
}

/// Basis label with the most significant qubit first.
pub fn bitstring(index: usize, qubits: usize) -> String {
    (0..qubits)
        .rev()
        .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurementRecord {
    pub probabilities: BTreeMap<String, f64>,
    pub counts: Option<BTreeMap<String, u64>>,
    pub shots: Option<u64>,
}

impl MeasurementRecord {
    /// Draws `shots` samples from the outcome distribution.
    pub fn sample(mut self, shots: u64, rng: &mut impl Rng) -> Self {
        let mut remaining = shots;
        let mut mass = 1.0f64;
        let mut counts = BTreeMap::new();
        let n = self.probabilities.len();
        for (idx, (label, p)) in self.probabilities.iter().enumerate() {
            let drawn = if idx + 1 == n {
                remaining
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(remaining, q).map(|b| b.sample(rng)).unwrap_or(0)
            };
            counts.insert(label.clone(), drawn);
            remaining -= drawn;
            mass -= p;
        }
        self.counts = Some(counts);
        self.shots = Some(shots);
        self
    }
}
