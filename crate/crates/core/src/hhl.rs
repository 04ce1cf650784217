//! Gate-level HHL: phase estimation, eigenvalue-conditioned rotation,
//! uncomputation and analytic postselection, plus the two constructions of
//! the normalized target operator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{ensure, QlleError, Result};
use crate::linalg::{
    c, eig_hermitian, expm_i_hermitian, partial_trace, state_fidelity, to_complex_vec, CMatrix,
    CVector, DensityOperator, Hermitian, Subsystem, C64,
};
use crate::lle::{affine_weights, conditioned_gram, local_gram, NeighborGraph, WeightConfig, WeightMatrix};
use crate::qsim::{iqft, overlap_test, Circuit, Gate, Shots, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenFunction {
    /// `f(l) = 1/l`, with `f(0) = 0`.
    Inverse,
    /// `f(l) = l`.
    Identity,
}

impl EigenFunction {
    fn eval(self, l: f64) -> f64 {
        match self {
            EigenFunction::Inverse if l == 0.0 => 0.0,
            EigenFunction::Inverse => 1.0 / l,
            EigenFunction::Identity => l,
        }
    }
}

/// How clock values are read back as eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSign {
    /// Signed if the Gershgorin discs reach below zero.
    #[default]
    Auto,
    NonNegative,
    /// Clock values in the upper half are negative eigenvalues.
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HhlConfig {
    pub clock_qubits: usize,
    /// `t0` in `U = exp(i A t0)`; chosen from a Gershgorin bound when absent.
    pub evolution_time: Option<f64>,
    /// Rotation constant; defaults to the reciprocal of the largest
    /// representable `|f|`.
    pub gamma: Option<f64>,
    pub function: EigenFunction,
    pub sign: SpectrumSign,
}

impl Default for HhlConfig {
    fn default() -> Self {
        Self::inverse(16)
    }
}

impl HhlConfig {
    pub fn inverse(clock_qubits: usize) -> Self {
        HhlConfig {
            clock_qubits,
            evolution_time: None,
            gamma: None,
            function: EigenFunction::Inverse,
            sign: SpectrumSign::Auto,
        }
    }

    pub fn identity(clock_qubits: usize) -> Self {
        HhlConfig {
            function: EigenFunction::Identity,
            ..Self::inverse(clock_qubits)
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (1..=20).contains(&self.clock_qubits),
            "clock register must have 1..=20 qubits, got {}",
            self.clock_qubits
        );
        if let Some(t0) = self.evolution_time {
            ensure!(t0.is_finite() && t0 > 0.0, "evolution time must be positive");
        }
        if let Some(g) = self.gamma {
            ensure!(g.is_finite() && g > 0.0, "rotation constant must be positive");
        }
        Ok(())
    }
}

/// Fraction of the clock range that the largest eigenvalue bound maps to.
const RANGE_FILL: f64 = 0.75;

/// Parameters after defaults have been resolved against a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedHhl {
    pub clock_qubits: usize,
    pub t0: f64,
    pub gamma: f64,
    pub signed: bool,
    pub function: EigenFunction,
}

impl ResolvedHhl {
    fn levels(&self) -> usize {
        1 << self.clock_qubits
    }

    /// Eigenvalue read from clock value `v`.
    pub fn eigenvalue(&self, v: usize) -> f64 {
        let t = self.levels();
        let s = if self.signed && v >= t / 2 { v as f64 - t as f64 } else { v as f64 };
        2.0 * PI * s / (t as f64 * self.t0)
    }

    /// Ancilla amplitude `gamma * f` for every clock value.
    pub fn rotation_amplitudes(&self) -> Vec<f64> {
        (0..self.levels())
            .map(|v| self.gamma * self.function.eval(self.eigenvalue(v)))
            .collect()
    }
}

pub fn resolve(m: &Hermitian, cfg: &HhlConfig) -> Result<ResolvedHhl> {
    cfg.validate()?;
    let signed = match cfg.sign {
        SpectrumSign::Signed => true,
        SpectrumSign::NonNegative => false,
        SpectrumSign::Auto => m.gershgorin_lower() < 0.0,
    };
    let t0 = match cfg.evolution_time {
        Some(t0) => t0,
        None => {
            let bound = m.gershgorin_bound();
            ensure!(bound > 0.0, "matrix is zero; no eigenvalue scale available");
            let fill = if signed { RANGE_FILL / 2.0 } else { RANGE_FILL };
            2.0 * PI * fill / bound
        }
    };
    let mut r = ResolvedHhl {
        clock_qubits: cfg.clock_qubits,
        t0,
        gamma: 1.0,
        signed,
        function: cfg.function,
    };
    let fmax = (0..r.levels())
        .map(|v| cfg.function.eval(r.eigenvalue(v)).abs())
        .fold(0.0, f64::max);
    r.gamma = cfg.gamma.unwrap_or(1.0 / fmax);
    let worst = r.rotation_amplitudes().iter().map(|a| a.abs()).fold(0.0, f64::max);
    ensure!(
        worst <= 1.0 + 1e-12,
        "rotation constant {} gives ancilla amplitude {worst} > 1",
        r.gamma
    );
    Ok(r)
}

fn check_representable(m: &Hermitian, r: &ResolvedHhl) -> Result<()> {
    for &l in &eig_hermitian(m).values {
        let phase = l * r.t0 / (2.0 * PI);
        let ok = if r.signed {
            (-0.5 - 1e-12..0.5).contains(&phase)
        } else {
            (-1e-12..1.0).contains(&phase)
        };
        if !ok {
            return Err(QlleError::contract(format!(
                "eigenvalue {l} is outside the representable clock range (t0 = {})",
                r.t0
            )));
        }
    }
    Ok(())
}

fn system_qubits(dim: usize) -> Result<usize> {
    ensure!(dim.is_power_of_two(), "system dimension {dim} must be a power of two");
    Ok(dim.trailing_zeros() as usize)
}

/// Phase estimation on `n + t` qubits: system on qubits `0..n`, clock on
/// `n..n+t`.
pub fn phase_estimation_circuit(m: &Hermitian, r: &ResolvedHhl) -> Result<Circuit> {
    let n = system_qubits(m.dim())?;
    let t = r.clock_qubits;
    let mut circ = Circuit::new(n + t);
    for p in 0..t {
        circ.push(Gate::H(n + p))?;
    }
    let targets: Vec<usize> = (0..n).collect();
    for p in 0..t {
        let u = expm_i_hermitian(m, r.t0 * (1u64 << p) as f64);
        circ.push(Gate::Unitary {
            targets: targets.clone(),
            controls: vec![n + p],
            matrix: u,
        })?;
    }
    circ.append(&iqft(t)?, n)?;
    Ok(circ)
}

/// Runs phase estimation and returns the joint clock ⊗ system state.
pub fn phase_estimation(m: &Hermitian, input: &StateVector, cfg: &HhlConfig) -> Result<StateVector> {
    ensure!(
        m.dim() == input.dim(),
        "matrix dimension {} does not match input dimension {}",
        m.dim(),
        input.dim()
    );
    let r = resolve(m, cfg)?;
    check_representable(m, &r)?;
    let circ = phase_estimation_circuit(m, &r)?;
    let full = StateVector::tensor(input, &StateVector::zero(r.clock_qubits));
    circ.apply(&full)
}

/// The complete HHL circuit on `n + t + 1` qubits, ancilla on top.
pub fn hhl_circuit(m: &Hermitian, r: &ResolvedHhl) -> Result<Circuit> {
    let n = system_qubits(m.dim())?;
    let t = r.clock_qubits;
    let pe = phase_estimation_circuit(m, r)?;
    let mut circ = Circuit::new(n + t + 1);
    circ.append(&pe, 0)?;
    let angles = r.rotation_amplitudes().iter().map(|a| 2.0 * a.clamp(-1.0, 1.0).asin()).collect();
    circ.push(Gate::UcRy {
        target: n + t,
        select: (n..n + t).collect(),
        angles,
    })?;
    circ.append(&pe.inverse(), 0)?;
    Ok(circ)
}

#[derive(Debug, Clone)]
pub struct PostselectedState {
    pub state: StateVector,
    pub success_probability: f64,
    /// Unnormalized system amplitudes of the accepted branch (ancilla 1,
    /// clock 0).
    pub branch: CVector,
    pub params: ResolvedHhl,
}

/// Solves `m x = b` (or applies `f(m)` in general) and postselects on the
/// ancilla reading 1 and the clock returning to 0.
pub fn hhl_solve(m: &Hermitian, b: &StateVector, cfg: &HhlConfig) -> Result<PostselectedState> {
    ensure!(m.dim() == b.dim(), "matrix and right-hand side dimensions differ");
    let r = resolve(m, cfg)?;
    check_representable(m, &r)?;
    run_resolved(m, b, &r)
}

fn run_resolved(m: &Hermitian, b: &StateVector, r: &ResolvedHhl) -> Result<PostselectedState> {
    let n = system_qubits(m.dim())?;
    let t = r.clock_qubits;
    let circ = hhl_circuit(m, r)?;
    let input = StateVector::tensor(b, &StateVector::zero(t + 1));
    let out = circ.apply(&input)?;
    let anc = n + t;
    let success_probability = 1.0 - out.prob_zero(anc);
    let base = 1usize << anc;
    let branch = CVector::from_fn(m.dim(), |i, _| out.amplitude(base | i));
    let norm = branch.norm();
    if norm <= 1e-14 {
        return Err(QlleError::SolveFailure(
            "right-hand side lies in the numerical kernel; postselection never succeeds".into(),
        ));
    }
    Ok(PostselectedState {
        state: StateVector::normalized(branch.clone())?,
        success_probability,
        branch,
        params: *r,
    })
}

/// Pads a Hermitian matrix with zeros to the next power-of-two dimension.
fn pad_hermitian(a: &DMatrix<f64>) -> Result<Hermitian> {
    let n = a.nrows();
    let p = n.next_power_of_two();
    let mut out = CMatrix::zeros(p, p);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = c(a[(i, j)], 0.0);
        }
    }
    Hermitian::new(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct HhlDiagnostics {
    pub point: usize,
    pub clock_qubits: usize,
    pub success_probability: f64,
    /// Fidelity with the normalized classical solution.
    pub fidelity: Option<f64>,
}

/// Padded Gram matrix, uniform right-hand side on the `k` neighbor slots,
/// and the solver configuration for a positive semidefinite system.
fn weight_system(cg: &DMatrix<f64>, cfg: &HhlConfig) -> Result<(Hermitian, StateVector, HhlConfig)> {
    let k = cg.nrows();
    let m = pad_hermitian(cg)?;
    let rhs = CVector::from_fn(m.dim(), |r, _| c(if r < k { 1.0 } else { 0.0 }, 0.0));
    let b = StateVector::normalized(rhs)?;
    let mut hcfg = *cfg;
    if hcfg.sign == SpectrumSign::Auto {
        // Gram matrices are positive semidefinite.
        hcfg.sign = SpectrumSign::NonNegative;
    }
    Ok((m, b, hcfg))
}

/// The HHL circuit that solves for the weights of point `i`.
pub fn weight_column_circuit(
    data: &DataMatrix,
    graph: &NeighborGraph,
    i: usize,
    wcfg: &WeightConfig,
    cfg: &HhlConfig,
) -> Result<Circuit> {
    ensure!(i < data.len(), "point {i} out of range");
    let (cg, _) = conditioned_gram(&local_gram(data, graph, i), wcfg);
    let (m, _, hcfg) = weight_system(&cg, cfg)?;
    hhl_circuit(&m, &resolve(&m, &hcfg)?)
}

/// Weights of point `i`, from an HHL solve of `C w = 1` on the `k`
/// neighbor slots followed by rescaling to unit sum.
pub fn solve_weight_column(
    data: &DataMatrix,
    graph: &NeighborGraph,
    i: usize,
    wcfg: &WeightConfig,
    cfg: &HhlConfig,
) -> Result<(DVector<f64>, HhlDiagnostics)> {
    let k = graph.k();
    let (cg, _) = conditioned_gram(&local_gram(data, graph, i), wcfg);
    if k == 1 {
        return Ok((
            DVector::from_element(1, 1.0),
            HhlDiagnostics {
                point: i,
                clock_qubits: cfg.clock_qubits,
                success_probability: 1.0,
                fidelity: Some(1.0),
            },
        ));
    }
    let (m, b, hcfg) = weight_system(&cg, cfg)?;
    let sol = hhl_solve(&m, &b, &hcfg)?;
    let amps: Vec<C64> = sol.state.amplitudes().iter().take(k).copied().collect();
    let total: C64 = amps.iter().sum();
    ensure!(total.norm() > 1e-14, "recovered weights of point {i} sum to zero");
    let w = DVector::from_iterator(k, amps.iter().map(|a| (a / total).re));
    let classical = affine_weights(&cg)?;
    let fidelity = state_fidelity(&to_complex_vec(&w), &to_complex_vec(&classical));
    Ok((
        w,
        HhlDiagnostics {
            point: i,
            clock_qubits: cfg.clock_qubits,
            success_probability: sol.success_probability,
            fidelity: Some(fidelity),
        },
    ))
}

/// All weight columns, solved in parallel.
pub fn hhl_weights(
    data: &DataMatrix,
    graph: &NeighborGraph,
    wcfg: &WeightConfig,
    cfg: &HhlConfig,
) -> Result<(WeightMatrix, Vec<HhlDiagnostics>)> {
    let n = data.len();
    let cols = (0..n)
        .into_par_iter()
        .map(|i| solve_weight_column(data, graph, i, wcfg, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (w, diags): (Vec<_>, Vec<_>) = cols.into_iter().unzip();
    Ok((WeightMatrix::from_columns(n, graph, &w)?, diags))
}

/// Normalized `M` from the register `sum_{i,m} (I - W)_{m i} |i>|m>` with
/// the `i` register traced out.
pub fn build_rho_m_qram(w: &WeightMatrix) -> Result<DensityOperator> {
    let n = w.n();
    let a = w.residual_operator();
    ensure!(a.amax() > 0.0, "I - W vanishes; the target operator has zero trace");
    let p = n.next_power_of_two();
    let amps = CVector::from_fn(p * p, |idx, _| {
        let (i, m) = (idx / p, idx % p);
        if i < n && m < n {
            c(a[(m, i)], 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    let psi = StateVector::normalized(amps)?;
    let rho = psi.amplitudes() * psi.amplitudes().adjoint();
    let reduced = partial_trace(&rho, p, p, Subsystem::Second)?;
    DensityOperator::from_unnormalized(reduced.view((0, 0), (n, n)).into_owned())
}

/// Normalized `(I - W) rho0 (I - W)^T` with `rho0 = I/N`, applying `I - W`
/// through HHL with `f(l) = l`.
///
/// `I - W` is not Hermitian, so the solver acts on the dilation
/// `[[0, I - W], [(I - W)^T, 0]]`; feeding `(0, e_i)` returns
/// `((I - W) e_i, 0)`. The maximally mixed input is the uniform mixture of
/// the `e_i`, so the accepted branches are accumulated as outer products.
pub fn build_rho_m_hhl(w: &WeightMatrix, cfg: &HhlConfig) -> Result<DensityOperator> {
    let n = w.n();
    let a = w.residual_operator();
    let mut dil = DMatrix::zeros(2 * n, 2 * n);
    dil.view_mut((0, n), (n, n)).copy_from(&a);
    dil.view_mut((n, 0), (n, n)).copy_from(&a.transpose());
    let h = pad_hermitian(&dil)?;
    let mut hcfg = *cfg;
    hcfg.function = EigenFunction::Identity;
    if hcfg.sign == SpectrumSign::Auto {
        // The dilation spectrum is symmetric about zero.
        hcfg.sign = SpectrumSign::Signed;
    }
    let r = resolve(&h, &hcfg)?;
    check_representable(&h, &r)?;
    let branches = (0..n)
        .into_par_iter()
        .map(|i| {
            let b = StateVector::basis(h.dim().trailing_zeros() as usize, n + i)?;
            let out = run_resolved(&h, &b, &r)?;
            Ok(out.branch.rows(0, n).into_owned())
        })
        .collect::<Result<Vec<CVector>>>()?;
    let mut acc = CMatrix::zeros(n, n);
    for v in &branches {
        acc += (v * v.adjoint()).unscale(n as f64);
    }
    DensityOperator::from_unnormalized(acc)
}

/// `|e_i - w_i| = 2 sqrt(1 - P(0))` from the overlap test on unit vectors.
pub fn norm_from_overlap(ei: &StateVector, wi: &StateVector, shots: Shots) -> Result<f64> {
    let p0 = overlap_test(ei, wi, shots)?;
    Ok(2.0 * (1.0 - p0).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::gen_s_curve;
    use crate::linalg::trace_distance;
    use crate::lle::{build_m_real, knn, local_weights};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn real_herm(a: DMatrix<f64>) -> Hermitian {
        Hermitian::from_real(&a).unwrap()
    }

    /// Analytic HHL output: each eigencomponent is weighted by the Fejér
    /// kernel of phase estimation times the rotation amplitude.
    fn analytic_branch(m: &Hermitian, b: &CVector, r: &ResolvedHhl) -> (CVector, f64) {
        let eig = eig_hermitian(m);
        let t = r.levels();
        let amps = r.rotation_amplitudes();
        let mut out = CVector::zeros(m.dim());
        let mut prob = 0.0;
        for (j, &l) in eig.values.iter().enumerate() {
            let u = eig.vector(j);
            let beta = u.dotc(b);
            let phi = l * r.t0 / (2.0 * PI);
            let mut factor = 0.0;
            let mut p = 0.0;
            for (v, a) in amps.iter().enumerate() {
                let alpha: C64 = (0..t)
                    .map(|x| C64::from_polar(1.0 / t as f64, 2.0 * PI * x as f64 * (phi - v as f64 / t as f64)))
                    .sum();
                factor += alpha.norm_sqr() * a;
                p += alpha.norm_sqr() * a * a;
            }
            out += u * beta * c(factor, 0.0);
            prob += beta.norm_sqr() * p;
        }
        (out, prob)
    }

    fn random_well_conditioned(rng: &mut impl Rng, kappa: f64) -> Hermitian {
        let g = CMatrix::from_fn(4, 4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = g.qr().q();
        let vals: Vec<f64> = (0..4).map(|i| 1.0 + (kappa - 1.0) * i as f64 / 3.0).collect();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(4, vals.iter().map(|v| c(*v, 0.0))));
        Hermitian::symmetrized(&(&q * d * q.adjoint()))
    }

    #[test]
    fn exact_two_bit_eigenvalues_give_sharp_clock() {
        let t0 = 1.0;
        let m = real_herm(DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 0.5])) * (2.0 * PI / t0));
        let cfg = HhlConfig {
            evolution_time: Some(t0),
            sign: SpectrumSign::NonNegative,
            ..HhlConfig::inverse(2)
        };
        for (input, clock) in [(0usize, 1usize), (1, 2)] {
            let s = phase_estimation(&m, &StateVector::basis(1, input).unwrap(), &cfg).unwrap();
            let idx = clock << 1 | input;
            assert!((s.amplitude(idx).norm() - 1.0).abs() < 1e-12);
        }
        let plus = StateVector::normalized(CVector::from_element(2, c(1.0, 0.0))).unwrap();
        let s = phase_estimation(&m, &plus, &cfg).unwrap();
        assert!((s.amplitude(1 << 1).norm_sqr() - 0.5).abs() < 1e-12);
        assert!((s.amplitude(2 << 1 | 1).norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_eigenvalue_is_reported() {
        let m = real_herm(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 7.0])));
        let cfg = HhlConfig {
            evolution_time: Some(1.0),
            sign: SpectrumSign::NonNegative,
            ..HhlConfig::inverse(3)
        };
        let err = phase_estimation(&m, &StateVector::zero(1), &cfg).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn random_hermitian_clock_concentrates_near_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = CMatrix::from_fn(4, 4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = Hermitian::symmetrized(&g);
        let cfg = HhlConfig::inverse(8);
        let r = resolve(&m, &cfg).unwrap();
        let eig = eig_hermitian(&m);
        let input = StateVector::normalized(CVector::from_element(4, c(1.0, 0.0))).unwrap();
        let s = phase_estimation(&m, &input, &cfg).unwrap();
        let unit = 2.0 * PI / (256.0 * r.t0);
        let mut good = 0.0;
        for v in 0..256usize {
            let p: f64 = (0..4).map(|i| s.amplitude(v << 2 | i).norm_sqr()).sum();
            let est = r.eigenvalue(v);
            if eig.values.iter().any(|l| (l - est).abs() <= unit) {
                good += p;
            }
        }
        assert!(good >= 0.9, "mass near eigenvalues {good}");
    }

    #[test]
    fn identity_system_returns_input() {
        let m = real_herm(DMatrix::identity(2, 2));
        let b = StateVector::normalized(CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)])).unwrap();
        let out = hhl_solve(&m, &b, &HhlConfig::inverse(4)).unwrap();
        assert!((state_fidelity(out.state.amplitudes(), b.amplitudes()) - 1.0).abs() < 1e-10);
        let g = out.params.gamma;
        assert!((out.success_probability - g * g).abs() < 1e-10);
    }

    #[test]
    fn diagonal_system_matches_classical_solve() {
        let m = real_herm(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));
        let b = StateVector::normalized(CVector::from_element(2, c(1.0, 0.0))).unwrap();
        let out = hhl_solve(&m, &b, &HhlConfig::inverse(8)).unwrap();
        let expect = CVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(state_fidelity(out.state.amplitudes(), &expect) >= 0.999);
    }

    #[test]
    fn circuit_output_matches_fejer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let m = random_well_conditioned(&mut rng, 4.0);
            let b = StateVector::normalized(CVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), 0.0))).unwrap();
            let cfg = HhlConfig::inverse(5);
            let out = hhl_solve(&m, &b, &cfg).unwrap();
            let (branch, prob) = analytic_branch(&m, b.amplitudes(), &out.params);
            assert!((out.branch.clone() - branch).camax() < 1e-10);
            assert!((out.success_probability - prob).abs() < 1e-10);
        }
    }

    #[test]
    fn fidelity_grows_with_clock_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_well_conditioned(&mut rng, 3.0);
        let b = StateVector::normalized(CVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), 0.0))).unwrap();
        let exact = crate::linalg::solve_linear(m.matrix(), b.amplitudes()).unwrap();
        let fids: Vec<f64> = [4, 6, 8, 10]
            .iter()
            .map(|&t| state_fidelity(hhl_solve(&m, &b, &HhlConfig::inverse(t)).unwrap().state.amplitudes(), &exact))
            .collect();
        assert!(fids.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{fids:?}");
    }

    #[test]
    fn kernel_input_fails() {
        let m = real_herm(DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])));
        let cfg = HhlConfig {
            sign: SpectrumSign::NonNegative,
            ..HhlConfig::inverse(4)
        };
        assert!(matches!(hhl_solve(&m, &StateVector::zero(1), &cfg), Err(QlleError::SolveFailure(_))));
    }

    #[test]
    fn invalid_rotation_constant_is_rejected() {
        let m = real_herm(DMatrix::identity(2, 2));
        let cfg = HhlConfig {
            gamma: Some(100.0),
            ..HhlConfig::inverse(4)
        };
        assert!(hhl_solve(&m, &StateVector::zero(1), &cfg).is_err());
    }

    #[test]
    fn trivial_weight_columns() {
        let data = DataMatrix::from_points(&[vec![0.0, 0.0], vec![-1.0, 0.5], vec![1.0, 0.5], vec![0.0, 5.0]]).unwrap();
        let wcfg = WeightConfig::default();
        let g = knn(&data, 2).unwrap();
        let (w, _) = solve_weight_column(&data, &g, 0, &wcfg, &HhlConfig::inverse(8)).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-10 && (w[1] - 0.5).abs() < 1e-10);
        let g1 = knn(&data, 1).unwrap();
        let (w, _) = solve_weight_column(&data, &g1, 0, &wcfg, &HhlConfig::inverse(8)).unwrap();
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn hhl_columns_sum_to_one_and_track_classical() {
        let data = gen_s_curve(12, 3).unwrap();
        let g = knn(&data, 3).unwrap();
        let wcfg = WeightConfig::default();
        let (w, diags) = hhl_weights(&data, &g, &wcfg, &HhlConfig::inverse(10)).unwrap();
        for col in w.matrix().column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-10);
        }
        assert!(diags.iter().all(|d| d.success_probability > 0.0 && d.success_probability <= 1.0));
        let (wc, _) = local_weights(&data, &g, &wcfg).unwrap();
        let fid = diags.iter().map(|d| d.fidelity.unwrap()).fold(1.0, f64::min);
        assert!(fid > 0.5, "min fidelity {fid}, max error {}", (w.matrix() - wc.matrix()).amax());
    }

    fn toy_weights(seed: u64) -> WeightMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DataMatrix::new(DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        local_weights(&data, &knn(&data, 2).unwrap(), &WeightConfig::default()).unwrap().0
    }

    #[test]
    fn qram_rho_matches_normalized_m() {
        for seed in 0..5 {
            let w = toy_weights(seed);
            let rho = build_rho_m_qram(&w).unwrap();
            let m = build_m_real(&w);
            let expect = &m / m.trace();
            assert!((rho.matrix().map(|z| z.re) - expect).amax() < 1e-12);
            let ones = CVector::from_element(4, c(1.0, 0.0));
            assert!((rho.matrix() * ones).camax() < 1e-9);
            assert!((crate::linalg::trace(rho.matrix()).re - 1.0).abs() < 1e-12);
        }
        assert!(build_rho_m_qram(&WeightMatrix::new(DMatrix::identity(3, 3)).unwrap()).is_err());
    }

    #[test]
    fn hhl_rho_is_close_to_qram_rho() {
        for seed in 0..3 {
            let w = toy_weights(seed);
            let q = build_rho_m_qram(&w).unwrap();
            let h = build_rho_m_hhl(&w, &HhlConfig::identity(10)).unwrap();
            let td = trace_distance(q.matrix(), h.matrix());
            assert!(td <= 0.05, "trace distance {td}");
        }
    }

    #[test]
    fn hhl_rho_of_zero_weights_is_maximally_mixed() {
        let w = WeightMatrix::new_unchecked(DMatrix::zeros(4, 4));
        let h = build_rho_m_hhl(&w, &HhlConfig::identity(6)).unwrap();
        assert!((h.matrix() - CMatrix::identity(4, 4) * c(0.25, 0.0)).camax() < 1e-10);
    }

    #[test]
    fn overlap_norms() {
        let e = StateVector::basis(2, 1).unwrap();
        assert!(norm_from_overlap(&e, &e, Shots::Exact).unwrap() < 1e-7);
        let o = StateVector::basis(2, 2).unwrap();
        assert!((norm_from_overlap(&e, &o, Shots::Exact).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn overlap_norm_matches_classical(v in prop::collection::vec(-1.0f64..1.0, 4), i in 0usize..4) {
            prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let w = StateVector::normalized(CVector::from_iterator(4, v.iter().map(|x| c(*x, 0.0)))).unwrap();
            let e = StateVector::basis(2, i).unwrap();
            let expect = (e.amplitudes() - w.amplitudes()).norm();
            prop_assert!((norm_from_overlap(&e, &w, Shots::Exact).unwrap() - expect).abs() < 1e-10);
        }

        #[test]
        fn reported_success_matches_ancilla_probability(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_well_conditioned(&mut rng, 5.0);
            let b = StateVector::normalized(CVector::from_fn(4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).unwrap();
            let out = hhl_solve(&m, &b, &HhlConfig::inverse(4)).unwrap();
            let (_, prob) = analytic_branch(&m, b.amplitudes(), &out.params);
            prop_assert!((out.success_probability - prob).abs() < 1e-10);
        }
    }
}
