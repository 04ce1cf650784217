//! Exact classical locally linear embedding, the reference every simulated
//! pipeline is checked against.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{ensure, Result};
use crate::linalg::{eig_symmetric, solve_real, Hermitian, C64};

/// For every point, its `k` nearest neighbors as `(index, squared distance)`
/// in ascending distance order; ties go to the lower index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborGraph {
    k: usize,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn indices(&self, i: usize) -> Vec<usize> {
        self.neighbors[i].iter().map(|&(j, _)| j).collect()
    }

    /// Builds a graph from any squared-distance function using the shared
    /// selection and tie rule.
    pub fn from_distances<F>(n: usize, k: usize, dist2: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        ensure!(k >= 1, "neighbor count must be at least 1");
        ensure!(k < n, "neighbor count k={k} must be smaller than the number of points N={n}");
        let neighbors = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut cand = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| Ok((j, dist2(i, j)?)))
                    .collect::<Result<Vec<_>>>()?;
                cand.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                cand.truncate(k);
                Ok(cand)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NeighborGraph { k, neighbors })
    }

    /// Number of directed edges present in one graph but not the other.
    pub fn edge_difference(&self, other: &NeighborGraph) -> usize {
        self.neighbors
            .iter()
            .zip(&other.neighbors)
            .map(|(a, b)| a.iter().filter(|(j, _)| !b.iter().any(|(l, _)| l == j)).count())
            .sum()
    }

    pub fn same_edges(&self, other: &NeighborGraph) -> bool {
        self.k == other.k
            && self.len() == other.len()
            && (0..self.len()).all(|i| self.indices(i) == other.indices(i))
    }
}

/// Euclidean k-nearest-neighbor graph.
pub fn knn(data: &DataMatrix, k: usize) -> Result<NeighborGraph> {
    let x = data.matrix();
    NeighborGraph::from_distances(data.len(), k, |i, j| {
        Ok((x.column(i) - x.column(j)).norm_squared())
    })
}

/// N×N reconstruction weights; column `i` holds the weights of point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    /// Accepts any square matrix whose columns sum to one.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        ensure!(w.is_square(), "weight matrix must be square");
        for (i, col) in w.column_iter().enumerate() {
            let s: f64 = col.sum();
            ensure!(
                (s - 1.0).abs() <= 1e-8,
                "weight column {i} sums to {s}, expected 1"
            );
        }
        Ok(WeightMatrix(w))
    }

    /// Wraps a matrix without validating column sums; used for degenerate
    /// test inputs such as `W = 0`.
    pub fn new_unchecked(w: DMatrix<f64>) -> Self {
        WeightMatrix(w)
    }

    pub fn from_columns(n: usize, graph: &NeighborGraph, cols: &[DVector<f64>]) -> Result<Self> {
        ensure!(cols.len() == n && graph.len() == n, "one weight column per point expected");
        let mut w = DMatrix::zeros(n, n);
        for (i, col) in cols.iter().enumerate() {
            ensure!(col.len() == graph.k(), "weight column {i} has wrong length");
            for (slot, &j) in graph.indices(i).iter().enumerate() {
                w[(j, i)] = col[slot];
            }
        }
        Self::new(w)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// `I - W`.
    pub fn residual_operator(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// Ridge added as `regularization * tr(C) * I` when the local Gram
    /// matrix is numerically singular.
    pub regularization: f64,
    /// Relative singular-value threshold below which `C` counts as singular.
    pub singular_threshold: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            regularization: 1e-3,
            singular_threshold: 1e-10,
        }
    }
}

/// Local Gram matrix `C = dX^T dX` of point `i`, where column `j` of `dX`
/// is `x_i - x_{n_j}`.
pub fn local_gram(data: &DataMatrix, graph: &NeighborGraph, i: usize) -> DMatrix<f64> {
    let x = data.matrix();
    let idx = graph.indices(i);
    let dx = DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, i)] - x[(r, idx[c])]);
    dx.transpose() * dx
}

/// The Gram matrix actually solved: `C` itself when well conditioned,
/// otherwise `C + reg * tr(C) * I` (or `C + I` if `C = 0`). The flag reports
/// whether regularization was applied.
pub fn conditioned_gram(c: &DMatrix<f64>, cfg: &WeightConfig) -> (DMatrix<f64>, bool) {
    let k = c.nrows();
    let sv = c.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax > 0.0 && smin > cfg.singular_threshold * smax {
        return (c.clone(), false);
    }
    let tr = c.trace();
    let ridge = if tr > 0.0 { cfg.regularization * tr } else { 1.0 };
    (c + DMatrix::identity(k, k) * ridge, true)
}

/// Solves `C w = 1` and rescales so the entries sum to one.
pub fn affine_weights(c: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = c.nrows();
    let raw = solve_real(c, &DVector::from_element(k, 1.0))?;
    let s = raw.sum();
    ensure!(s.abs() > 1e-300, "weight system has no affine solution");
    Ok(raw / s)
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightDiagnostics {
    pub residuals: Vec<f64>,
    pub regularized: Vec<bool>,
}

pub fn local_weights(
    data: &DataMatrix,
    graph: &NeighborGraph,
    cfg: &WeightConfig,
) -> Result<(WeightMatrix, WeightDiagnostics)> {
    let n = data.len();
    ensure!(graph.len() == n, "graph has {} points, data has {n}", graph.len());
    let solved = (0..n)
        .into_par_iter()
        .map(|i| {
            let (c, flag) = conditioned_gram(&local_gram(data, graph, i), cfg);
            Ok((affine_weights(&c)?, flag))
        })
        .collect::<Result<Vec<_>>>()?;
    let cols: Vec<DVector<f64>> = solved.iter().map(|(w, _)| w.clone()).collect();
    let w = WeightMatrix::from_columns(n, graph, &cols)?;
    let x = data.matrix();
    let recon = x * w.matrix();
    let residuals = (0..n).map(|i| (x.column(i) - recon.column(i)).norm()).collect();
    let regularized = solved.iter().map(|(_, f)| *f).collect();
    Ok((w, WeightDiagnostics { residuals, regularized }))
}

/// `M = (I - W)(I - W^T)`, real symmetric.
pub fn build_m_real(w: &WeightMatrix) -> DMatrix<f64> {
    let a = w.residual_operator();
    let m = &a * a.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn build_m(w: &WeightMatrix) -> Hermitian {
    Hermitian::symmetrized(&build_m_real(w).map(|x| C64::new(x, 0.0)))
}

/// d×N embedding; each row is one output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(DMatrix<f64>);

impl EmbeddingMatrix {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        ensure!(y.nrows() > 0 && y.ncols() > 0, "embedding is empty");
        ensure!(y.iter().all(|v| v.is_finite()), "embedding has non-finite entries");
        Ok(EmbeddingMatrix(y))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.nrows()
    }

    pub fn n(&self) -> usize {
        self.0.ncols()
    }

    /// `max |Y 1|` over rows.
    pub fn centering_error(&self) -> f64 {
        self.0.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }

    /// `max |Y Y^T / N - I|` entrywise.
    pub fn whitening_error(&self) -> f64 {
        let d = self.d();
        let g = &self.0 * self.0.transpose() / self.n() as f64;
        (g - DMatrix::identity(d, d)).amax()
    }

    /// Centers the rows and applies symmetric orthogonalization so that
    /// `Y 1 = 0` and `Y Y^T / N = I`.
    pub fn whitened(y: &DMatrix<f64>) -> Result<Self> {
        let n = y.ncols() as f64;
        let mut c = y.clone();
        for mut row in c.row_iter_mut() {
            let mean = row.sum() / n;
            row.add_scalar_mut(-mean);
        }
        let g = &c * c.transpose() / n;
        let eig = eig_symmetric(&((&g + g.transpose()) * 0.5))?;
        ensure!(
            eig.values[0] > 1e-14 * eig.values.last().copied().unwrap_or(1.0).max(1e-300),
            "embedding rows are linearly dependent and cannot be whitened"
        );
        let inv_sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
            eig.values.len(),
            eig.values.iter().map(|v| 1.0 / v.sqrt()),
        ));
        let w = &eig.vectors * inv_sqrt * eig.vectors.transpose();
        Self::new(w * c)
    }
}

/// Rows of the result are `sqrt(N)` times eigenvectors 2..d+1 of `m`.
///
/// The all-ones direction is shifted to the top of the spectrum first, so
/// the returned rows are orthogonal to it even if the null space of `m` is
/// degenerate.
pub fn embed(m: &Hermitian, d: usize) -> Result<(EmbeddingMatrix, Vec<f64>)> {
    let n = m.dim();
    ensure!(d >= 1 && d < n, "embedding dimension d={d} must lie in 1..N-1 (N={n})");
    let re = m.matrix().map(|z| z.re);
    ensure!(
        m.matrix().iter().all(|z| z.im.abs() <= 1e-12 * re.amax().max(1.0)),
        "embedding expects a real symmetric target matrix"
    );
    let full = eig_symmetric(&re)?;
    let shift = 2.0 * full.values.iter().map(|v| v.abs()).fold(0.0, f64::max) + 1.0;
    let ones = DMatrix::from_element(n, n, shift / n as f64);
    let shifted = eig_symmetric(&(&re + ones))?;
    let y = DMatrix::from_fn(d, n, |r, c| shifted.vectors[(c, r)] * (n as f64).sqrt());
    Ok((EmbeddingMatrix::new(y)?, full.values))
}

#[derive(Debug, Clone, Serialize)]
pub struct LleDiagnostics {
    pub reconstruction_residuals: Vec<f64>,
    pub regularized: Vec<bool>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LleResult {
    pub graph: NeighborGraph,
    pub weights: WeightMatrix,
    pub m: Hermitian,
    pub embedding: EmbeddingMatrix,
    pub diagnostics: LleDiagnostics,
}

pub fn classical_lle(data: &DataMatrix, k: usize, d: usize, cfg: &WeightConfig) -> Result<LleResult> {
    let graph = knn(data, k)?;
    let (weights, wd) = local_weights(data, &graph, cfg)?;
    let m = build_m(&weights);
    let (embedding, eigenvalues) = embed(&m, d)?;
    Ok(LleResult {
        graph,
        weights,
        m,
        embedding,
        diagnostics: LleDiagnostics {
            reconstruction_residuals: wd.residuals,
            regularized: wd.regularized,
            eigenvalues,
        },
    })
}
