//! Variational LLE: a real-amplitude Ry/CZ ansatz, the weight cost `L1`,
//! the end-to-end embedding cost `L2`, the deflated eigenvalue cost `L3`,
//! gradients and an AdaGrad optimizer with restarts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{ensure, Result};
use crate::linalg::{canonical_sign, c, CVector, DensityOperator};
use crate::lle::{affine_weights, conditioned_gram, local_gram, EmbeddingMatrix, NeighborGraph, WeightConfig, WeightMatrix};
use crate::qsim::{Circuit, Gate, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Entangler {
    #[default]
    Ring,
    Line,
}

/// Layers of single-qubit Ry rotations, each followed by a CZ entangler.
/// Parameter `l * qubits + q` drives qubit `q` in layer `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ansatz {
    pub qubits: usize,
    pub layers: usize,
    pub entangler: Entangler,
}

impl Ansatz {
    pub fn new(qubits: usize, layers: usize, entangler: Entangler) -> Result<Self> {
        ensure!((1..=20).contains(&qubits), "ansatz needs 1..=20 qubits");
        ensure!(layers >= 1, "ansatz needs at least one layer");
        Ok(Ansatz { qubits, layers, entangler })
    }

    /// Smallest register holding `dim` amplitudes.
    pub fn for_dim(dim: usize, layers: usize, entangler: Entangler) -> Result<Self> {
        let qubits = dim.next_power_of_two().trailing_zeros().max(1) as usize;
        Self::new(qubits, layers, entangler)
    }

    pub fn parameter_count(&self) -> usize {
        self.qubits * self.layers
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let q = self.qubits;
        let mut p: Vec<(usize, usize)> = (0..q.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if self.entangler == Entangler::Ring && q > 2 {
            p.push((q - 1, 0));
        }
        p
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        ensure!(
            theta.len() == self.parameter_count(),
            "ansatz takes {} parameters, got {}",
            self.parameter_count(),
            theta.len()
        );
        Ok(())
    }

    /// Real amplitudes of the ansatz state; Ry and CZ never leave the reals.
    pub fn amplitudes(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        let mut a = DVector::zeros(self.dim());
        a[0] = 1.0;
        let pairs = self.pairs();
        for layer in theta.chunks(self.qubits) {
            for (q, &t) in layer.iter().enumerate() {
                let (s, c) = (t / 2.0).sin_cos();
                let bit = 1 << q;
                for i in (0..a.len()).filter(|i| i & bit == 0) {
                    let (x, y) = (a[i], a[i | bit]);
                    a[i] = c * x - s * y;
                    a[i | bit] = s * x + c * y;
                }
            }
            for &(p, q) in &pairs {
                let mask = (1 << p) | (1 << q);
                for i in (0..a.len()).filter(|i| i & mask == mask) {
                    a[i] = -a[i];
                }
            }
        }
        Ok(a)
    }

    pub fn circuit(&self, theta: &[f64]) -> Result<Circuit> {
        self.check(theta)?;
        let mut circ = Circuit::new(self.qubits);
        for layer in theta.chunks(self.qubits) {
            for (q, &t) in layer.iter().enumerate() {
                circ.push(Gate::Ry { target: q, theta: t })?;
            }
            for (p, q) in self.pairs() {
                circ.push(Gate::CPhase { control: p, target: q, theta: PI })?;
            }
        }
        Ok(circ)
    }
}

pub fn ansatz_state(a: &Ansatz, theta: &[f64]) -> Result<StateVector> {
    StateVector::new(a.amplitudes(theta)?.map(|x| c(x, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    ParameterShift,
    FiniteDifference,
}

const FD_STEP: f64 = 1e-5;

/// Parameter shift is exact for expectation values of a Hermitian
/// observable in the Ry parameters; central differences serve composite
/// costs with classical post-processing.
pub fn gradient<F>(cost: &F, theta: &[f64], method: GradientMethod) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (h, denom) = match method {
        GradientMethod::ParameterShift => (PI / 2.0, 2.0),
        GradientMethod::FiniteDifference => (FD_STEP, 2.0 * FD_STEP),
    };
    (0..theta.len())
        .into_par_iter()
        .map(|j| {
            let mut t = theta.to_vec();
            t[j] = theta[j] + h;
            let up = cost(&t);
            t[j] = theta[j] - h;
            (up - cost(&t)) / denom
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaGradConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Minimum best-so-far improvement expected within `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AdaGradConfig {
    fn default() -> Self {
        AdaGradConfig {
            learning_rate: 0.1,
            epsilon: 1e-8,
            max_iterations: 2000,
            tolerance: 1e-8,
            patience: 50,
            restarts: 3,
            seed: 0,
        }
    }
}

impl AdaGradConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning rate must be positive");
        ensure!(self.epsilon > 0.0, "AdaGrad epsilon must be positive");
        ensure!(self.tolerance > 0.0, "convergence tolerance must be positive");
        ensure!(self.max_iterations >= 1 && self.restarts >= 1 && self.patience >= 1, "optimizer counts must be positive");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub accumulator: Vec<f64>,
    pub iteration: usize,
}

impl OptimizerState {
    pub fn new(n: usize, learning_rate: f64, epsilon: f64) -> Self {
        OptimizerState {
            learning_rate,
            epsilon,
            accumulator: vec![0.0; n],
            iteration: 0,
        }
    }
}

pub fn adagrad_step(mut state: OptimizerState, theta: &[f64], grad: &[f64]) -> Result<(OptimizerState, Vec<f64>)> {
    ensure!(
        theta.len() == grad.len() && theta.len() == state.accumulator.len(),
        "AdaGrad length mismatch"
    );
    let mut next = theta.to_vec();
    for ((t, g), acc) in next.iter_mut().zip(grad).zip(state.accumulator.iter_mut()) {
        *acc += g * g;
        *t -= state.learning_rate * g / (*acc + state.epsilon).sqrt();
    }
    state.iteration += 1;
    Ok((state, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub restart: usize,
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub theta: Vec<f64>,
    pub cost: f64,
    /// Cost at the first restart's starting point.
    pub initial_cost: f64,
    pub iterations: usize,
    /// The best restart stopped on the tolerance rule, not the iteration cap.
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// AdaGrad from uniformly random angles, repeated `restarts` times; the best
/// point seen across all iterations is returned. `stream` separates the
/// random starts of independent problems sharing one seed.
pub fn minimize<C, G>(cost: C, grad: G, n: usize, cfg: &AdaGradConfig, stream: u64) -> Result<OptimizeResult>
where
    C: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut initial_cost = f64::NAN;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
        rng.set_stream(stream);
        let mut theta: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let mut state = OptimizerState::new(n, cfg.learning_rate, cfg.epsilon);
        let mut current = cost(&theta);
        if restart == 0 {
            initial_cost = current;
        }
        let (mut run_theta, mut run_best) = (theta.clone(), current);
        let mut history = vec![run_best];
        let mut converged = false;
        for it in 0..cfg.max_iterations {
            let g = grad(&theta);
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            trace.push(TraceRow { restart, iteration: it, cost: current, gradient_norm: gn });
            (state, theta) = adagrad_step(state, &theta, &g)?;
            current = cost(&theta);
            iterations += 1;
            if current < run_best {
                run_best = current;
                run_theta.clone_from(&theta);
            }
            history.push(run_best);
            if history.len() > cfg.patience && history[history.len() - 1 - cfg.patience] - run_best < cfg.tolerance {
                converged = true;
                break;
            }
        }
        if best.as_ref().is_none_or(|b| run_best < b.1) {
            best = Some((run_theta, run_best, converged));
        }
    }
    let (theta, cost, converged) = best.expect("at least one restart");
    Ok(OptimizeResult { theta, cost, initial_cost, iterations, converged, trace })
}

/// `1 - overlap^2` between `C psi` and the ones vector on the first `k`
/// slots; slots past `k` are padding that `C` annihilates.
/// Returns `None` when `C psi = 0`.
fn column_cost(c: &DMatrix<f64>, psi: &DVector<f64>) -> Option<f64> {
    let k = c.nrows();
    let v = c * psi.rows(0, k);
    let nv = v.norm_squared();
    (nv > 1e-300).then(|| 1.0 - v.sum().powi(2) / (k as f64 * nv))
}

#[derive(Debug, Clone, Serialize)]
pub struct L1Value {
    pub cost: f64,
    /// Points whose `C psi` vanished and contributed the maximal cost 1.
    pub degenerate: Vec<usize>,
}

/// Mean over points of `1 - |<1|C_i psi_i>|^2 / (k |C_i psi_i|^2)`.
pub fn cost_l1(
    data: &DataMatrix,
    graph: &NeighborGraph,
    ansatz: &Ansatz,
    thetas: &[Vec<f64>],
    wcfg: &WeightConfig,
) -> Result<L1Value> {
    let n = data.len();
    ensure!(thetas.len() == n, "need one parameter block per point");
    ensure!(ansatz.dim() >= graph.k(), "ansatz register too small for {} neighbors", graph.k());
    let mut total = 0.0;
    let mut degenerate = Vec::new();
    for (i, theta) in thetas.iter().enumerate() {
        let (c, _) = conditioned_gram(&local_gram(data, graph, i), wcfg);
        match column_cost(&c, &ansatz.amplitudes(theta)?) {
            Some(v) => total += v,
            None => {
                total += 1.0;
                degenerate.push(i);
            }
        }
    }
    Ok(L1Value { cost: total / n as f64, degenerate })
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnReport {
    pub point: usize,
    pub cost: f64,
    pub converged: bool,
    /// Cosine similarity with the classical weight column.
    pub cosine: f64,
}

#[derive(Debug, Clone)]
pub struct VariationalWeights {
    pub weights: WeightMatrix,
    pub columns: Vec<ColumnReport>,
    pub traces: Vec<Vec<TraceRow>>,
    pub warnings: Vec<String>,
}

const L1_WARN: f64 = 1e-3;

/// Minimizes `L1` column by column and rescales each optimal state, masked
/// to the neighbor slots, to unit column sum.
pub fn solve_weights_variational(
    data: &DataMatrix,
    graph: &NeighborGraph,
    layers: usize,
    entangler: Entangler,
    wcfg: &WeightConfig,
    opt: &AdaGradConfig,
) -> Result<VariationalWeights> {
    let n = data.len();
    ensure!(graph.len() == n, "graph and data sizes differ");
    let k = graph.k();
    let solved = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(DVector<f64>, ColumnReport, Vec<TraceRow>)> {
            let (c, _) = conditioned_gram(&local_gram(data, graph, i), wcfg);
            let classical = affine_weights(&c)?;
            if k == 1 {
                let w = DVector::from_element(1, 1.0);
                return Ok((w, ColumnReport { point: i, cost: 0.0, converged: true, cosine: 1.0 }, Vec::new()));
            }
            let ansatz = Ansatz::for_dim(k, layers, entangler)?;
            let cost = |t: &[f64]| {
                ansatz.amplitudes(t).ok().and_then(|a| column_cost(&c, &a)).unwrap_or(1.0)
            };
            let res = minimize(
                cost,
                |t| gradient(&cost, t, GradientMethod::FiniteDifference),
                ansatz.parameter_count(),
                opt,
                i as u64,
            )?;
            let psi = ansatz.amplitudes(&res.theta)?.rows(0, k).into_owned();
            let s = psi.sum();
            ensure!(s.abs() > 1e-12 * psi.norm(), "optimal state of point {i} has zero column sum");
            let w = psi / s;
            let cosine = w.dot(&classical) / (w.norm() * classical.norm());
            Ok((w, ColumnReport { point: i, cost: res.cost, converged: res.converged, cosine }, res.trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = Vec::with_capacity(n);
    let mut columns = Vec::with_capacity(n);
    let mut traces = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for (w, rep, tr) in solved {
        if rep.cost > L1_WARN {
            warnings.push(format!("weight column {} did not converge: L1 = {:.3e}", rep.point, rep.cost));
        }
        cols.push(w);
        columns.push(rep);
        traces.push(tr);
    }
    Ok(VariationalWeights {
        weights: WeightMatrix::from_columns(n, graph, &cols)?,
        columns,
        traces,
        warnings,
    })
}

/// Reads a d×N embedding from the first `d N` amplitudes. A unit state has
/// Frobenius norm 1 while a whitened embedding has `N d`, hence the scale.
pub fn read_embedding(amps: &DVector<f64>, d: usize, n: usize) -> DMatrix<f64> {
    let scale = ((n * d) as f64).sqrt();
    DMatrix::from_fn(d, n, |r, i| amps[r * n + i] * scale)
}

/// `|Y (I - W)|_F^2 + penalty (|Y 1|^2 + |Y Y^T / N - I|_F^2)`.
pub fn cost_l2_matrix(w: &WeightMatrix, y: &DMatrix<f64>, penalty: f64) -> Result<f64> {
    let n = w.n();
    ensure!(y.ncols() == n, "embedding has {} columns, weights have {n}", y.ncols());
    let d = y.nrows();
    let main = (y * w.residual_operator()).norm_squared();
    let centre = y.column_sum().norm_squared();
    let white = (y * y.transpose() / n as f64 - DMatrix::identity(d, d)).norm_squared();
    Ok(main + penalty * (centre + white))
}

pub fn cost_l2(w: &WeightMatrix, ansatz: &Ansatz, theta: &[f64], d: usize, penalty: f64) -> Result<f64> {
    let n = w.n();
    ensure!(ansatz.dim() >= d * n, "ansatz holds {} amplitudes, need {}", ansatz.dim(), d * n);
    cost_l2_matrix(w, &read_embedding(&ansatz.amplitudes(theta)?, d, n), penalty)
}

#[derive(Debug, Clone)]
pub struct VariationalEmbedding {
    pub embedding: EmbeddingMatrix,
    /// Eigenvalue estimates; empty for the end-to-end design.
    pub eigenvalues: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub trivial_overlap: Option<f64>,
    pub traces: Vec<Vec<TraceRow>>,
    pub warnings: Vec<String>,
    /// Ansatz circuit at the optimum (the first embedding row for VQE).
    pub circuit: Circuit,
}

/// Minimizes `L2` over one ansatz holding all of `Y`, then whitens exactly.
pub fn embed_end_to_end(
    w: &WeightMatrix,
    d: usize,
    layers: usize,
    entangler: Entangler,
    penalty: f64,
    opt: &AdaGradConfig,
) -> Result<VariationalEmbedding> {
    let n = w.n();
    ensure!(d >= 1 && d < n, "embedding dimension must lie in 1..N-1");
    ensure!(penalty >= 0.0 && penalty.is_finite(), "penalty must be non-negative");
    let ansatz = Ansatz::for_dim(d * n, layers, entangler)?;
    let cost = |t: &[f64]| cost_l2(w, &ansatz, t, d, penalty).unwrap_or(f64::INFINITY);
    let res = minimize(
        cost,
        |t| gradient(&cost, t, GradientMethod::FiniteDifference),
        ansatz.parameter_count(),
        opt,
        0,
    )?;
    let mut warnings = Vec::new();
    if !res.converged {
        warnings.push(format!("end-to-end optimization hit the iteration cap at cost {:.3e}", res.cost));
    }
    let y = read_embedding(&ansatz.amplitudes(&res.theta)?, d, n);
    Ok(VariationalEmbedding {
        embedding: EmbeddingMatrix::whitened(&y)?,
        eigenvalues: Vec::new(),
        cost: res.cost,
        initial_cost: res.initial_cost,
        trivial_overlap: None,
        traces: vec![res.trace],
        warnings,
        circuit: ansatz.circuit(&res.theta)?,
    })
}

/// `<psi|rho|psi> + sum_i alpha_i |<psi|phi_i>|^2` for a real ansatz state.
pub fn cost_l3(rho: &DMatrix<f64>, ansatz: &Ansatz, theta: &[f64], deflation: &[(DVector<f64>, f64)]) -> Result<f64> {
    ensure!(rho.nrows() == ansatz.dim(), "operator and ansatz dimensions differ");
    let psi = ansatz.amplitudes(theta)?;
    Ok(deflated_energy(rho, &psi, deflation))
}

fn deflated_energy(rho: &DMatrix<f64>, psi: &DVector<f64>, deflation: &[(DVector<f64>, f64)]) -> f64 {
    let e = psi.dot(&(rho * psi));
    e + deflation.iter().map(|(phi, a)| a * psi.dot(phi).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct VqeSpectrum {
    pub ansatz: Ansatz,
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    pub thetas: Vec<Vec<f64>>,
    pub traces: Vec<Vec<TraceRow>>,
    pub warnings: Vec<String>,
}

/// Sequentially minimizes `L3`, deflating every state found so far with
/// weight `alpha` and the padding directions `dim..2^q` with `10 alpha`.
pub fn vqe_eigenpairs(
    rho: &DMatrix<f64>,
    count: usize,
    layers: usize,
    entangler: Entangler,
    alpha: f64,
    opt: &AdaGradConfig,
) -> Result<VqeSpectrum> {
    let dim = rho.nrows();
    ensure!(rho.is_square() && dim >= 1, "VQE needs a square operator");
    ensure!(count >= 1 && count <= dim, "cannot extract {count} eigenpairs from dimension {dim}");
    ensure!(alpha > 0.0, "deflation weight must be positive");
    let ansatz = Ansatz::for_dim(dim, layers, entangler)?;
    let p = ansatz.dim();
    let mut padded = DMatrix::zeros(p, p);
    padded.view_mut((0, 0), (dim, dim)).copy_from(rho);
    let mut deflation: Vec<(DVector<f64>, f64)> = (dim..p)
        .map(|j| (DVector::from_fn(p, |r, _| if r == j { 1.0 } else { 0.0 }), 10.0 * alpha))
        .collect();
    let mut out = VqeSpectrum {
        ansatz,
        eigenvalues: Vec::new(),
        vectors: Vec::new(),
        thetas: Vec::new(),
        traces: Vec::new(),
        warnings: Vec::new(),
    };
    for level in 0..count {
        let defl = deflation.clone();
        let cost = |t: &[f64]| cost_l3(&padded, &ansatz, t, &defl).unwrap_or(f64::INFINITY);
        let res = minimize(
            cost,
            |t| gradient(&cost, t, GradientMethod::ParameterShift),
            ansatz.parameter_count(),
            opt,
            level as u64,
        )?;
        let psi = ansatz.amplitudes(&res.theta)?;
        let value = psi.dot(&(&padded * &psi));
        if !res.converged {
            out.warnings.push(format!("eigenpair {level} hit the iteration cap"));
        }
        if let Some(prev) = out.eigenvalues.last() {
            if (value - prev).abs() < 1e-6 {
                out.warnings.push(format!(
                    "eigenvalues {} and {level} differ by less than 1e-6; the eigenvectors may be mixed",
                    level - 1
                ));
            }
        }
        deflation.push((psi.clone(), alpha));
        out.eigenvalues.push(value);
        out.vectors.push(psi.rows(0, dim).into_owned());
        out.thetas.push(res.theta);
        out.traces.push(res.trace);
    }
    Ok(out)
}

/// Eigenvectors 2..d+1 of `rho_m` found by deflated VQE, scaled by
/// `sqrt(N)`, sign-fixed and whitened.
pub fn embed_vqe(
    rho_m: &DensityOperator,
    d: usize,
    layers: usize,
    entangler: Entangler,
    alpha: Option<f64>,
    opt: &AdaGradConfig,
) -> Result<VariationalEmbedding> {
    let n = rho_m.dim();
    ensure!(d >= 1 && d < n, "embedding dimension must lie in 1..N-1");
    let rho = rho_m.matrix().map(|z| z.re);
    // For a density operator the top eigenvalue is at most its trace, 1.
    let alpha = alpha.unwrap_or(2.0);
    let spec = vqe_eigenpairs(&rho, d + 1, layers, entangler, alpha, opt)?;
    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let trivial = spec.vectors[0].dot(&ones).abs();
    let scale = (n as f64).sqrt();
    let mut y = DMatrix::zeros(d, n);
    for (r, v) in spec.vectors[1..].iter().enumerate() {
        let mut v = v.clone();
        canonical_sign(&mut v);
        y.row_mut(r).copy_from(&(v * scale).transpose());
    }
    let final_cost = spec.eigenvalues.iter().sum();
    Ok(VariationalEmbedding {
        embedding: EmbeddingMatrix::whitened(&y)?,
        eigenvalues: spec.eigenvalues,
        cost: final_cost,
        initial_cost: f64::NAN,
        trivial_overlap: Some(trivial),
        circuit: spec.ansatz.circuit(&spec.thetas[1])?,
        traces: spec.traces,
        warnings: spec.warnings,
    })
}

/// Complex view of a real ansatz amplitude vector.
pub fn as_complex(v: &DVector<f64>) -> CVector {
    v.map(|x| c(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig_symmetric;
    use crate::lle::{build_m_real, classical_lle, knn, local_weights};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_theta(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-PI..PI)).collect()
    }

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &g * g.transpose();
        &m / m.trace()
    }

    #[test]
    fn ansatz_basic_states() {
        let a = Ansatz::new(3, 1, Entangler::Ring).unwrap();
        let s = ansatz_state(&a, &[0.0; 3]).unwrap();
        assert!((s.amplitude(0).re - 1.0).abs() < 1e-15);
        let one = Ansatz::new(1, 1, Entangler::Ring).unwrap();
        let s = ansatz_state(&one, &[PI]).unwrap();
        assert!((s.amplitude(1).re - 1.0).abs() < 1e-15 && s.amplitude(0).norm() < 1e-15);
        assert!(ansatz_state(&a, &[0.0; 2]).is_err());
        assert_eq!(Ansatz::new(4, 3, Entangler::Line).unwrap().parameter_count(), 12);
    }

    #[test]
    fn fast_path_matches_gate_circuit() {
        for (q, ent) in [(1, Entangler::Ring), (2, Entangler::Ring), (3, Entangler::Ring), (4, Entangler::Line)] {
            let a = Ansatz::new(q, 3, ent).unwrap();
            let theta = random_theta(a.parameter_count(), q as u64);
            let fast = as_complex(&a.amplitudes(&theta).unwrap());
            let slow = a.circuit(&theta).unwrap().apply(&StateVector::zero(q)).unwrap();
            assert!((fast - slow.amplitudes()).camax() < 1e-13);
        }
    }

    #[test]
    fn parameter_shift_matches_analytic_derivative() {
        let a = Ansatz::new(1, 1, Entangler::Ring).unwrap();
        let z = |t: &[f64]| {
            let v = a.amplitudes(t).unwrap();
            v[0] * v[0] - v[1] * v[1]
        };
        for th in [-2.0, -0.3, 0.0, 0.7, 2.9] {
            let g = gradient(&z, &[th], GradientMethod::ParameterShift)[0];
            assert!((g + f64::sin(th)).abs() < 1e-10);
        }
        let flat = |_: &[f64]| 3.0;
        assert!(gradient(&flat, &[0.1, 0.2], GradientMethod::FiniteDifference).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn adagrad_closed_form_and_bowl() {
        let s = OptimizerState::new(1, 0.1, 1e-8);
        let (s, t) = adagrad_step(s, &[0.5], &[0.0]).unwrap();
        assert_eq!(t, vec![0.5]);
        let (_, t) = adagrad_step(s, &[0.5], &[1.0]).unwrap();
        assert!((t[0] - 0.4).abs() < 1e-7);
        let mut st = OptimizerState::new(1, 0.1, 1e-8);
        let mut th = vec![3.0];
        let mut at = Vec::new();
        for _ in 0..1000 {
            let g = vec![2.0 * th[0]];
            (st, th) = adagrad_step(st, &th, &g).unwrap();
            at.push(th[0]);
        }
        // independently iterated recurrence values
        assert!((at[499] - 0.248229704599995).abs() < 1e-9, "{}", at[499]);
        assert!(at[999].abs() <= 0.05);
        assert!(at.windows(2).all(|w| w[1] < w[0]));
        assert!(st.accumulator[0] >= 0.0);
        assert!(adagrad_step(st, &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn best_so_far_never_exceeds_start() {
        let f = |t: &[f64]| (t[0] - 1.0).powi(2) + (3.0 * t[1]).sin();
        let res = minimize(f, |t| gradient(&f, t, GradientMethod::FiniteDifference), 2, &AdaGradConfig::default(), 0).unwrap();
        assert!(res.cost <= res.initial_cost);
        assert!(res.trace.iter().all(|r| r.cost >= res.cost - 1e-12));
    }

    #[test]
    fn l1_contributions_at_extremes() {
        let c = DMatrix::identity(4, 4);
        let ones = DVector::from_element(4, 0.5);
        assert!(column_cost(&c, &ones).unwrap().abs() < 1e-15);
        let orth = DVector::from_vec(vec![0.5, -0.5, 0.5, -0.5]);
        assert!((column_cost(&c, &orth).unwrap() - 1.0).abs() < 1e-15);
        assert!(column_cost(&DMatrix::zeros(4, 4), &ones).is_none());
    }

    fn toy_data(n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn toy_weights_match_classical() {
        let data = toy_data(4, 1);
        let graph = knn(&data, 3).unwrap();
        let cfg = WeightConfig::default();
        let v = solve_weights_variational(&data, &graph, 4, Entangler::Ring, &cfg, &AdaGradConfig::default()).unwrap();
        let (w, _) = local_weights(&data, &graph, &cfg).unwrap();
        for (i, rep) in v.columns.iter().enumerate() {
            let a = v.weights.matrix().column(i);
            let b = w.matrix().column(i);
            let fid = a.dot(&b).powi(2) / (a.norm_squared() * b.norm_squared());
            assert!(fid >= 0.99, "column {i}: {fid}, cost {}", rep.cost);
        }
    }

    #[test]
    fn single_and_symmetric_neighbors() {
        let data = DataMatrix::new(DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0])).unwrap();
        let g1 = knn(&data, 1).unwrap();
        let v = solve_weights_variational(&data, &g1, 2, Entangler::Ring, &WeightConfig::default(), &AdaGradConfig::default()).unwrap();
        assert!(v.weights.matrix().row_sum().iter().all(|s| (s - 1.0).abs() < 1e-12));
        let g2 = knn(&data, 2).unwrap();
        let v = solve_weights_variational(&data, &g2, 2, Entangler::Ring, &WeightConfig::default(), &AdaGradConfig::default()).unwrap();
        let mid = v.weights.matrix().column(1);
        assert!((mid[0] - 0.5).abs() < 1e-2 && (mid[2] - 0.5).abs() < 1e-2);
    }

    #[test]
    fn l2_of_oracle_embedding_is_its_energy() {
        let data = toy_data(8, 2);
        let res = classical_lle(&data, 4, 2, &WeightConfig::default()).unwrap();
        let y = res.embedding.matrix();
        let m = build_m_real(&res.weights);
        let energy = (y * &m * y.transpose()).trace();
        let eig = eig_symmetric(&m).unwrap();
        let l2 = cost_l2_matrix(&res.weights, y, 10.0).unwrap();
        assert!((l2 - energy).abs() < 1e-6);
        assert!((energy - 8.0 * (eig.values[1] + eig.values[2])).abs() < 1e-6);
        let id = WeightMatrix::new(DMatrix::identity(8, 8)).unwrap();
        assert!(cost_l2_matrix(&id, y, 0.0).unwrap().abs() < 1e-12);
        let zero = DMatrix::zeros(2, 8);
        assert!((cost_l2_matrix(&res.weights, &zero, 10.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn l3_rayleigh_and_self_deflation() {
        let rho = random_psd(4, 3);
        let eig = eig_symmetric(&rho).unwrap();
        let a = Ansatz::new(2, 2, Entangler::Ring).unwrap();
        let ground = eig.vectors.column(0).into_owned();
        assert!((deflated_energy(&rho, &ground, &[]) - eig.values[0]).abs() < 1e-12);
        let theta = random_theta(4, 5);
        let psi = a.amplitudes(&theta).unwrap();
        let with = cost_l3(&rho, &a, &theta, &[(psi.clone(), 2.0)]).unwrap();
        assert!((with - psi.dot(&(&rho * &psi)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deflated_vqe_finds_second_eigenvalue() {
        let rho = random_psd(4, 4);
        let eig = eig_symmetric(&rho).unwrap();
        let spec = vqe_eigenpairs(&rho, 2, 4, Entangler::Ring, 2.0, &AdaGradConfig::default()).unwrap();
        assert!((spec.eigenvalues[0] - eig.values[0]).abs() < 1e-3);
        assert!((spec.eigenvalues[1] - eig.values[1]).abs() < 1e-3, "{:?} vs {:?}", spec.eigenvalues, eig.values);
    }

    #[test]
    fn padded_vqe_ignores_padding() {
        let rho = random_psd(3, 6);
        let eig = eig_symmetric(&rho).unwrap();
        let spec = vqe_eigenpairs(&rho, 1, 4, Entangler::Ring, 2.0, &AdaGradConfig::default()).unwrap();
        assert!((spec.eigenvalues[0] - eig.values[0]).abs() < 1e-3);
        assert_eq!(spec.vectors[0].len(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ansatz_states_are_normalized(q in 1usize..6, layers in 1usize..5, seed in any::<u64>()) {
            let a = Ansatz::new(q, layers, Entangler::Ring).unwrap();
            let v = a.amplitudes(&random_theta(a.parameter_count(), seed)).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn l3_within_rayleigh_bounds(seed in any::<u64>()) {
            let rho = random_psd(8, seed);
            let eig = eig_symmetric(&rho).unwrap();
            let a = Ansatz::new(3, 4, Entangler::Ring).unwrap();
            let v = cost_l3(&rho, &a, &random_theta(12, seed ^ 1), &[]).unwrap();
            prop_assert!(v >= eig.values[0] - 1e-12 && v <= eig.values[7] + 1e-12);
        }

        #[test]
        fn shift_and_difference_gradients_agree(seed in any::<u64>()) {
            let h = random_psd(4, seed);
            let a = Ansatz::new(2, 3, Entangler::Ring).unwrap();
            let f = |t: &[f64]| cost_l3(&h, &a, t, &[]).unwrap();
            let theta = random_theta(6, seed ^ 2);
            let ps = gradient(&f, &theta, GradientMethod::ParameterShift);
            let fd = gradient(&f, &theta, GradientMethod::FiniteDifference);
            prop_assert!(ps.iter().zip(&fd).all(|(a, b)| (a - b).abs() < 1e-4));
        }
    }
}
