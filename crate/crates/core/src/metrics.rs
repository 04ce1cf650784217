//! Embedding comparison: principal subspace angle, Procrustes residual and
//! trustworthiness.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::datasets::DataMatrix;
use crate::error::{ensure, Result};
use crate::linalg::principal_angles;
use crate::lle::EmbeddingMatrix;

fn same_shape(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<()> {
    ensure!(
        a.d() == b.d() && a.n() == b.n(),
        "embedding shapes differ: {}x{} vs {}x{}",
        a.d(),
        a.n(),
        b.d(),
        b.n()
    );
    Ok(())
}

/// Largest principal angle, in degrees, between the row spaces.
pub fn subspace_angle_deg(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<f64> {
    same_shape(a, b)?;
    let angles = principal_angles(&a.matrix().transpose(), &b.matrix().transpose());
    Ok(angles.last().copied().unwrap_or(0.0).to_degrees())
}

/// `min_R |A - R B|_F / |A|_F` over orthogonal d×d matrices `R`.
pub fn procrustes_residual(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<f64> {
    same_shape(a, b)?;
    let (ya, yb) = (a.matrix(), b.matrix());
    let svd = (ya * yb.transpose()).svd(true, true);
    let r = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let scale = ya.norm();
    ensure!(scale > 0.0, "reference embedding is zero");
    Ok((ya - r * yb).norm() / scale)
}

/// For each point, every other point ordered by squared distance, ties by
/// index.
fn rank_table(points: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = points.ncols();
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((points.column(i) - points.column(j)).norm_squared(), j))
                .collect();
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            others.into_iter().map(|p| p.1).collect()
        })
        .collect()
}

/// `T(k) = 1 - 2 / (n k (2n - 3k - 1)) * sum_i sum_{j in U_i} (r(i, j) - k)`,
/// where `U_i` holds the embedding's k nearest neighbors of `i` that are not
/// among its k nearest in the data and `r` is the rank in the data space.
pub fn trustworthiness(data: &DataMatrix, y: &EmbeddingMatrix, k: usize) -> Result<f64> {
    let n = data.len();
    ensure!(y.n() == n, "embedding has {} points, data has {n}", y.n());
    ensure!(k >= 1 && 2 * n > 3 * k + 1, "trustworthiness needs 1 <= k < (2n - 1) / 3");
    let orig = rank_table(data.matrix());
    let emb = rank_table(y.matrix());
    let mut penalty = 0usize;
    for i in 0..n {
        let mut rank = vec![0usize; n];
        for (r, &j) in orig[i].iter().enumerate() {
            rank[j] = r + 1;
        }
        penalty += emb[i][..k].iter().map(|&j| rank[j]).filter(|&r| r > k).map(|r| r - k).sum::<usize>();
    }
    let norm = 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0));
    Ok(1.0 - norm * penalty as f64)
}

/// Angle and Procrustes residual between the embeddings plus the
/// trustworthiness of each against the data's k-NN structure.
pub fn compare(a: &EmbeddingMatrix, b: &EmbeddingMatrix, data: &DataMatrix, k: usize) -> Result<BTreeMap<String, f64>> {
    same_shape(a, b)?;
    let mut m = BTreeMap::new();
    m.insert("subspace_angle_deg".to_owned(), subspace_angle_deg(a, b)?);
    m.insert("procrustes_residual".to_owned(), procrustes_residual(a, b)?);
    m.insert("trustworthiness".to_owned(), trustworthiness(data, b, k)?);
    m.insert("trustworthiness_oracle".to_owned(), trustworthiness(data, a, k)?);
    Ok(m)
}
