//! Fourier-basis arithmetic: the QFT and a phase-rotation subtractor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::qsim::circuit::{Circuit, Gate};
use crate::qsim::state::StateVector;

/// `|x> -> T^{-1/2} sum_k e^{2 pi i x k / T} |k>` with `T = 2^q`.
pub fn qft(q: usize) -> Result<Circuit> {
    ensure!(q >= 1, "QFT needs at least one qubit");
    let mut c = Circuit::new(q);
    for j in (0..q).rev() {
        c.push(Gate::H(j))?;
        for m in (0..j).rev() {
            c.push(Gate::CPhase {
                control: m,
                target: j,
                theta: PI / (1u64 << (j - m)) as f64,
            })?;
        }
    }
    for i in 0..q / 2 {
        c.push(Gate::Swap(i, q - 1 - i))?;
    }
    Ok(c)
}

pub fn iqft(q: usize) -> Result<Circuit> {
    Ok(qft(q)?.inverse())
}

/// Circuit on `2q` qubits mapping `|a>|b> -> |a>|a - b mod 2^q>`, where
/// `a` occupies qubits `0..q` and `b` qubits `q..2q`.
///
/// The second register is complemented (`b -> -b - 1`), moved to the
/// Fourier basis, shifted by `a + 1` with controlled phase rotations, and
/// transformed back.
pub fn subtractor(q: usize) -> Result<Circuit> {
    ensure!(q >= 1, "subtractor needs at least one bit per register");
    let t = (1u64 << q) as f64;
    let mut c = Circuit::new(2 * q);
    for j in 0..q {
        c.push(Gate::X(q + j))?;
    }
    c.append(&qft(q)?, q)?;
    for m in 0..q {
        for j in 0..q - m {
            c.push(Gate::CPhase {
                control: m,
                target: q + j,
                theta: 2.0 * PI * (1u64 << (m + j)) as f64 / t,
            })?;
        }
    }
    for j in 0..q {
        c.push(Gate::Phase {
            target: q + j,
            theta: 2.0 * PI * (1u64 << j) as f64 / t,
        })?;
    }
    c.append(&iqft(q)?, q)?;
    Ok(c)
}

/// Runs the subtractor on basis inputs and returns the most probable value
/// of the second register.
pub fn subtract_basis(circuit: &Circuit, q: usize, a: u64, b: u64) -> Result<u64> {
    ensure!(circuit.qubits() == 2 * q, "subtractor width mismatch");
    let mask = (1u64 << q) - 1;
    let input = StateVector::basis(2 * q, ((b & mask) << q | (a & mask)) as usize)?;
    let out = circuit.apply(&input)?;
    let (best, _) = out
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, z)| (i, z.norm_sqr()))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok((best as u64 >> q) & mask)
}

/// Two's-complement fixed-point format with `bits` total and `frac`
/// fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub bits: u32,
    pub frac: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedDifference {
    pub value: f64,
    /// The true difference did not fit in the signed range and wrapped.
    pub overflow: bool,
    /// An input had to be clamped into the representable range.
    pub input_clamped: bool,
}

impl FixedPoint {
    pub fn new(bits: u32, frac: u32) -> Result<Self> {
        ensure!((1..=30).contains(&bits), "fixed-point width must be 1..=30 bits");
        ensure!(frac < bits, "fractional bits must be fewer than total bits");
        Ok(FixedPoint { bits, frac })
    }

    fn min_code(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    fn max_code(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// Returns the raw register value and whether clamping was needed.
    pub fn encode(&self, x: f64) -> (u64, bool) {
        let raw = (x * (1u64 << self.frac) as f64).round();
        let clamped = raw.clamp(self.min_code() as f64, self.max_code() as f64);
        let code = clamped as i64;
        ((code as u64) & ((1u64 << self.bits) - 1), clamped != raw)
    }

    pub fn decode(&self, code: u64) -> f64 {
        let m = 1u64 << self.bits;
        let code = code & (m - 1);
        let signed = if code >= m / 2 { code as i64 - m as i64 } else { code as i64 };
        signed as f64 / (1u64 << self.frac) as f64
    }

    /// `a - b` computed on the subtractor circuit.
    pub fn subtract(&self, circuit: &Circuit, a: f64, b: f64) -> Result<FixedDifference> {
        let q = self.bits as usize;
        let (ca, fa) = self.encode(a);
        let (cb, fb) = self.encode(b);
        let out = subtract_basis(circuit, q, ca, cb)?;
        let true_diff = self.decode(ca) - self.decode(cb);
        let value = self.decode(out);
        Ok(FixedDifference {
            value,
            overflow: (value - true_diff).abs() > 0.5 / (1u64 << self.frac) as f64,
            input_clamped: fa || fb,
        })
    }
}
