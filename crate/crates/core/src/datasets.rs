//! Benchmark manifolds and CSV persistence for point sets.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, QlleError, Result};

/// A D×N matrix of samples; each column is one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        ensure!(points.ncols() > 0 && points.nrows() > 0, "data matrix is empty");
        if let Some((idx, _)) = points.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let (r, c) = (idx % points.nrows(), idx / points.nrows());
            return Err(QlleError::contract(format!(
                "non-finite entry at coordinate {r} of point {c}"
            )));
        }
        Ok(DataMatrix(points))
    }

    /// Builds a D×N matrix from a list of points.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        ensure!(!points.is_empty(), "no points given");
        let dim = points[0].len();
        ensure!(
            points.iter().all(|p| p.len() == dim),
            "points have inconsistent dimensions"
        );
        Self::new(DMatrix::from_fn(dim, points.len(), |r, c| points[c][r]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn point(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.0.column(i)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Keeps the listed columns, in order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        ensure!(
            idx.iter().all(|&i| i < self.len()),
            "column index out of range"
        );
        Self::new(self.0.select_columns(idx))
    }
}

/// A generated manifold sample together with its intrinsic coordinate,
/// used to color plots.
#[derive(Debug, Clone)]
pub struct ManifoldSample {
    pub data: DataMatrix,
    pub param: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldRanges {
    pub t: (f64, f64),
    pub h: (f64, f64),
}

impl ManifoldRanges {
    pub const S_CURVE: ManifoldRanges = ManifoldRanges {
        t: (-1.5 * PI, 1.5 * PI),
        h: (0.0, 2.0),
    };
    pub const SWISS_ROLL: ManifoldRanges = ManifoldRanges {
        t: (1.5 * PI, 4.5 * PI),
        h: (0.0, 21.0),
    };

    fn validate(&self) -> Result<()> {
        ensure!(
            self.t.0 < self.t.1 && self.h.0 < self.h.1,
            "manifold parameter ranges must be non-empty intervals"
        );
        Ok(())
    }
}

fn sample_params(n: usize, seed: u64, r: &ManifoldRanges) -> Result<Vec<(f64, f64)>> {
    ensure!(n >= 1, "cannot generate an empty point set");
    r.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let t = rng.random_range(r.t.0..r.t.1);
            let h = rng.random_range(r.h.0..r.h.1);
            (t, h)
        })
        .collect())
}

pub fn sample_s_curve(n: usize, seed: u64, ranges: &ManifoldRanges) -> Result<ManifoldSample> {
    let params = sample_params(n, seed, ranges)?;
    let data = DMatrix::from_fn(3, n, |r, c| {
        let (t, h) = params[c];
        match r {
            0 => t.sin(),
            1 => h,
            _ => t.signum() * (t.cos() - 1.0),
        }
    });
    Ok(ManifoldSample {
        data: DataMatrix::new(data)?,
        param: params.iter().map(|p| p.0).collect(),
    })
}

pub fn sample_swiss_roll(n: usize, seed: u64, ranges: &ManifoldRanges) -> Result<ManifoldSample> {
    let params = sample_params(n, seed, ranges)?;
    let data = DMatrix::from_fn(3, n, |r, c| {
        let (t, h) = params[c];
        match r {
            0 => t * t.cos(),
            1 => h,
            _ => t * t.sin(),
        }
    });
    Ok(ManifoldSample {
        data: DataMatrix::new(data)?,
        param: params.iter().map(|p| p.0).collect(),
    })
}

/// S-shaped surface with the default parameter ranges.
pub fn gen_s_curve(n: usize, seed: u64) -> Result<DataMatrix> {
    Ok(sample_s_curve(n, seed, &ManifoldRanges::S_CURVE)?.data)
}

/// Swiss roll with the default parameter ranges.
pub fn gen_swiss_roll(n: usize, seed: u64) -> Result<DataMatrix> {
    Ok(sample_swiss_roll(n, seed, &ManifoldRanges::SWISS_ROLL)?.data)
}

/// Reads points from a CSV file with one point per row. A first row that
/// does not parse as numbers is treated as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(csv_error)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = line + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> =
            record.iter().map(|cell| cell.parse::<f64>()).collect();
        if rows.is_empty() && width.is_none() && parsed.iter().all(|p| p.is_err()) {
            width = Some(record.len());
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(QlleError::Parse {
                row,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(QlleError::Parse {
                        row,
                        column: col + 1,
                        message: format!("`{cell}` is not a finite number"),
                    })
                }
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(QlleError::Parse {
            row: 0,
            column: 0,
            message: "file contains no data rows".into(),
        });
    }
    DataMatrix::from_points(&rows)
}

fn csv_error(e: csv::Error) -> QlleError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => QlleError::Io(io),
        other => QlleError::Parse {
            row,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes points one per row with 17 significant digits, so that
/// [`load_csv`] reproduces the matrix bit for bit.
pub fn save_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path, data.len(), data.dim(), |i, j| data.0[(j, i)])
}

/// Writes an arbitrary real matrix row by row.
pub fn save_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path, m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn write_rows(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    at: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let mut out = String::new();
    for i in 0..rows {
        let line: Vec<String> = (0..cols).map(|j| format!("{:.16e}", at(i, j))).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
