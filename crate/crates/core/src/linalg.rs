//! Dense real and complex linear algebra shared by the classical and
//! simulated-quantum pipelines.
//!
//! Eigensolvers and SVD are delegated to `nalgebra`; this module adds the
//! contracts the rest of the crate relies on: ascending spectra, a canonical
//! eigenvector phase, pseudo-inverse solves with a relative cutoff, partial
//! traces and validated density operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{ensure, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative singular-value cutoff used by [`solve_linear`].
pub const PINV_CUTOFF: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| c(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

/// Largest entrywise deviation of `a` from its conjugate transpose.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// A square complex matrix checked to be Hermitian at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    pub fn new(a: CMatrix) -> Result<Self> {
        ensure!(
            a.is_square(),
            "Hermitian matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        );
        let scale = a.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
        let defect = hermitian_defect(&a);
        ensure!(
            defect <= HERMITIAN_TOL * scale,
            "matrix is not Hermitian (max |A - A^dagger| = {defect:e})"
        );
        Ok(Hermitian(a))
    }

    pub fn from_real(a: &DMatrix<f64>) -> Result<Self> {
        Self::new(to_complex(a))
    }

    /// Replaces `a` by `(a + a^dagger) / 2`. Intended for matrices that are
    /// Hermitian up to rounding.
    pub fn symmetrized(a: &CMatrix) -> Self {
        Hermitian((a + a.adjoint()).scale(0.5))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Gershgorin lower bound on the smallest eigenvalue.
    pub fn gershgorin_lower(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let off: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.0[(i, j)].norm())
                    .sum();
                self.0[(i, i)].re - off
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&v| c(v, 0.0)),
        ));
        &self.vectors * d * self.vectors.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct RealEigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Index of the largest-magnitude entry; near-ties (within 1e-12) go to the
/// lowest index.
fn pivot_index(mags: impl Iterator<Item = f64> + Clone) -> usize {
    let max = mags.clone().fold(0.0f64, f64::max);
    mags.enumerate()
        .find(|(_, m)| *m >= max - 1e-12 * max.max(1e-300))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Rotates the phase of `v` so its pivot entry is real and positive.
pub fn canonical_phase(v: &mut CVector) {
    let p = pivot_index(v.iter().map(|z| z.norm()));
    let z = v[p];
    if z.norm() > 0.0 {
        let phase = z.conj() / z.norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
}

pub fn canonical_sign(v: &mut DVector<f64>) {
    let p = pivot_index(v.iter().map(|x| x.abs()));
    if v[p] < 0.0 {
        v.neg_mut();
    }
}

/// Full spectrum of a Hermitian matrix, ascending, with canonical phases.
pub fn eig_hermitian(a: &Hermitian) -> EigenDecomposition {
    let n = a.dim();
    let eig = SymmetricEigen::new(a.matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        canonical_phase(&mut v);
        vectors.set_column(col, &v);
        values.push(eig.eigenvalues[i]);
    }
    EigenDecomposition { values, vectors }
}

/// Real symmetric counterpart of [`eig_hermitian`].
pub fn eig_symmetric(a: &DMatrix<f64>) -> Result<RealEigenDecomposition> {
    ensure!(a.is_square(), "matrix must be square");
    let scale = a.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
    let defect = (a - a.transpose()).amax();
    ensure!(
        defect <= HERMITIAN_TOL * scale,
        "matrix is not symmetric (defect {defect:e})"
    );
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        canonical_sign(&mut v);
        vectors.set_column(col, &v);
        values.push(eig.eigenvalues[i]);
    }
    Ok(RealEigenDecomposition { values, vectors })
}

/// Least-squares solution of `a x = b` through the pseudo-inverse with a
/// relative cutoff of `PINV_CUTOFF * sigma_max`. Exact for invertible `a`.
pub fn solve_linear(a: &CMatrix, b: &CVector) -> Result<CVector> {
    ensure!(a.is_square(), "solve_linear expects a square matrix");
    ensure!(
        a.nrows() == b.len(),
        "dimension mismatch: matrix is {}x{}, rhs has length {}",
        a.nrows(),
        a.ncols(),
        b.len()
    );
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = PINV_CUTOFF * smax;
    let utb = u.adjoint() * b;
    let mut scaled = CVector::zeros(utb.len());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff {
            scaled[i] = utb[i] / *s;
        }
    }
    Ok(v_t.adjoint() * scaled)
}

pub fn solve_real(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = solve_linear(&to_complex(a), &to_complex_vec(b))?;
    Ok(x.map(|z| z.re))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Partial trace of an operator on a `d1 * d2` bipartite space, where the
/// basis index is `i1 * d2 + i2`. Returns the reduced operator on `keep`.
pub fn partial_trace(rho: &CMatrix, d1: usize, d2: usize, keep: Subsystem) -> Result<CMatrix> {
    ensure!(
        rho.is_square() && rho.nrows() == d1 * d2,
        "operator dimension {} does not factor as {d1} x {d2}",
        rho.nrows()
    );
    Ok(match keep {
        Subsystem::First => CMatrix::from_fn(d1, d1, |a, b| {
            (0..d2).map(|k| rho[(a * d2 + k, b * d2 + k)]).sum()
        }),
        Subsystem::Second => CMatrix::from_fn(d2, d2, |a, b| {
            (0..d1).map(|k| rho[(k * d2 + a, k * d2 + b)]).sum()
        }),
    })
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `exp(i * t * h)` for Hermitian `h`, via its eigendecomposition.
pub fn expm_i_hermitian(h: &Hermitian, t: f64) -> CMatrix {
    let eig = eig_hermitian(h);
    let phases = DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&l| C64::from_polar(1.0, l * t)),
    );
    &eig.vectors * CMatrix::from_diagonal(&phases) * eig.vectors.adjoint()
}

/// Trace distance `||a - b||_1 / 2` between Hermitian operators.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = Hermitian::symmetrized(&(a - b));
    0.5 * eig_hermitian(&diff).values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Spectral norm.
pub fn operator_norm(a: &CMatrix) -> f64 {
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `|<a|b>|^2 / (|a|^2 |b|^2)`.
pub fn state_fidelity(a: &CVector, b: &CVector) -> f64 {
    let ip = a.dotc(b);
    ip.norm_sqr() / (a.norm_squared() * b.norm_squared())
}

/// Orthonormal basis (columns) of the column span of `a`, via thin QR with
/// rank-revealing SVD fallback.
pub fn orthonormal_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd computed with u");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Principal angles (radians, ascending) between the column spans of `a`
/// and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let (mut qa, mut qb) = (orthonormal_columns(a), orthonormal_columns(b));
    if qb.ncols() > qa.ncols() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let proj = qa.transpose() * &qb;
    let mut cos: Vec<f64> = proj.clone().svd(false, false).singular_values.iter().copied().collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    // Sines from the residual keep small angles accurate where acos is not.
    let mut sin: Vec<f64> = (&qb - &qa * proj).svd(false, false).singular_values.iter().copied().collect();
    sin.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(c, s)| if c * c > 0.5 { s.clamp(0.0, 1.0).asin() } else { c.clamp(-1.0, 1.0).acos() })
        .collect();
    let missing = qa.ncols().max(qb.ncols()).saturating_sub(angles.len());
    angles.extend(std::iter::repeat_n(std::f64::consts::FRAC_PI_2, missing));
    angles.sort_by(f64::total_cmp);
    angles
}

/// Mean squared cosine of the principal angles between the column spans
/// of `a` and `b` (1 for identical spans).
pub fn subspace_fidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let qa = orthonormal_complex(a);
    let qb = orthonormal_complex(b);
    let p = qa.ncols().max(qb.ncols()).max(1);
    (qa.adjoint() * qb).norm_squared() / p as f64
}

fn orthonormal_complex(a: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("svd computed with u");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-12 * smax)
        .collect();
    CMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// A Hermitian, positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(CMatrix);

impl DensityOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        ensure!(m.is_square(), "density operator must be square");
        ensure!(
            hermitian_defect(&m) <= DENSITY_TOL,
            "density operator is not Hermitian"
        );
        let tr = trace(&m);
        ensure!(
            (tr.re - 1.0).abs() <= DENSITY_TOL && tr.im.abs() <= DENSITY_TOL,
            "density operator trace is {tr}, expected 1"
        );
        let h = Hermitian::symmetrized(&m);
        let min = eig_hermitian(&h).values[0];
        ensure!(
            min >= -DENSITY_TOL,
            "density operator has negative eigenvalue {min:e}"
        );
        Ok(DensityOperator(m))
    }

    /// Normalizes a PSD operator by its trace.
    pub fn from_unnormalized(m: CMatrix) -> Result<Self> {
        let tr = trace(&m).re;
        ensure!(tr.abs() > 1e-300, "cannot normalize an operator with zero trace");
        Self::new(Hermitian::symmetrized(&m.unscale(tr)).into_matrix())
    }

    pub fn pure(v: &CVector) -> Result<Self> {
        let n = v.norm();
        ensure!(n > 0.0, "cannot build a density operator from the zero vector");
        let u = v.unscale(n);
        Ok(DensityOperator(&u * u.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOperator(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_hermitian(&self) -> Hermitian {
        Hermitian::symmetrized(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::QlleError;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> Hermitian {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        Hermitian::symmetrized(&a)
    }

    #[test]
    fn diagonal_spectrum_is_sorted_with_permuted_identity() {
        let a = Hermitian::from_real(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0])))
            .unwrap();
        let e = eig_hermitian(&a);
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let expect = [1usize, 2, 0];
        for (col, &row) in expect.iter().enumerate() {
            assert!((e.vectors[(row, col)] - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn identity_spectrum() {
        let e = eig_hermitian(&Hermitian::new(CMatrix::identity(4, 4)).unwrap());
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn random_hermitian_residual_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_hermitian(5, &mut rng);
            let e = eig_hermitian(&a);
            for i in 0..5 {
                let v = e.vector(i);
                let r = a.matrix() * &v - v.scale(e.values[i]);
                assert!(r.camax() <= 1e-9);
                let pivot = pivot_index(v.iter().map(|z| z.norm()));
                assert!(v[pivot].im.abs() < 1e-14 && v[pivot].re > 0.0);
            }
            let gram = e.vectors.adjoint() * &e.vectors;
            assert!((gram - CMatrix::identity(5, 5)).camax() < 1e-10);
            let rel = (e.reconstruct() - a.matrix()).norm() / a.matrix().norm();
            assert!(rel <= 1e-9);
        }
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(Hermitian::new(a), Err(QlleError::Contract(_))));
        assert!(Hermitian::new(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn solves_identity_and_diagonal_systems() {
        let b = CVector::from_vec(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let x = solve_linear(&CMatrix::identity(3, 3), &b).unwrap();
        assert!((x - &b).camax() < 1e-15);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let x = solve_real(&a, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_well_conditioned_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(6, 6, |i, j| {
            rng.random_range(-0.5..0.5) + if i == j { 4.0 } else { 0.0 }
        });
        let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_real(&a, &b).unwrap();
        assert!((&a * x - b).amax() <= 1e-10);
    }

    #[test]
    fn singular_system_returns_least_squares_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = solve_real(&a, &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        // minimum-norm least squares: (0.5, 0.5)
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn solve_dimension_mismatch() {
        let r = solve_linear(&CMatrix::identity(3, 3), &CVector::zeros(2));
        assert!(matches!(r, Err(QlleError::Contract(_))));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let ra = DensityOperator::pure(&CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)])).unwrap();
        let rb = DensityOperator::maximally_mixed(3);
        let joint = kron(ra.matrix(), rb.matrix());
        let back = partial_trace(&joint, 2, 3, Subsystem::First).unwrap();
        assert!((back - ra.matrix()).camax() < 1e-15);
        let back = partial_trace(&joint, 2, 3, Subsystem::Second).unwrap();
        assert!((back - rb.matrix()).camax() < 1e-15);
    }

    #[test]
    fn bell_state_reduces_to_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = CVector::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        let rho = &bell * bell.adjoint();
        for keep in [Subsystem::First, Subsystem::Second] {
            let r = partial_trace(&rho, 2, 2, keep).unwrap();
            assert!((r - CMatrix::identity(2, 2).scale(0.5)).camax() < 1e-15);
        }
        assert!(partial_trace(&rho, 3, 2, Subsystem::First).is_err());
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = CMatrix::from_fn(6, 6, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let rho = DensityOperator::from_unnormalized(&g * g.adjoint()).unwrap();
            for keep in [Subsystem::First, Subsystem::Second] {
                let r = partial_trace(rho.matrix(), 2, 3, keep).unwrap();
                assert!((trace(&r) - c(1.0, 0.0)).norm() < 1e-12);
                assert!(hermitian_defect(&r) < 1e-10);
                assert!(eig_hermitian(&Hermitian::symmetrized(&r)).values[0] > -1e-10);
            }
        }
    }

    #[test]
    fn principal_angles_of_identical_and_orthogonal_spans() {
        let a = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 1, &[0.0, 2.0, 0.0]);
        assert!(principal_angles(&a, &a.scale(-3.0))[0] < 1e-7);
        assert!((principal_angles(&a, &b)[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
