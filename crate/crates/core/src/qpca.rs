//! Density-matrix exponentiation and phase-estimation PCA of `J = xi I - rho`.
//!
//! The smallest eigenvalues of `rho` are the largest of `J`. Phase
//! estimation driven by the DME unitary produces a clock histogram whose
//! peaks are grouped into eigenvalue estimates; the conditioned system
//! register of each group yields its eigenvectors.
//!
//! Clock resolution is `2 pi / (2^t * total_time)`, far coarser than the
//! spread of the small eigenvalues of a typical target operator. Groups that
//! merge several eigenvalues can therefore be refined by a spectral zoom:
//! the operator is compressed onto the group's subspace, renormalized to
//! unit trace and analysed again.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{num_complex::Complex as FftComplex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::error::{ensure, Result};
use crate::hhl::{hhl_weights, build_rho_m_qram, HhlConfig, HhlDiagnostics};
use crate::linalg::{
    canonical_phase, eig_hermitian, expm_i_hermitian, trace, CMatrix, CVector, DensityOperator, Hermitian, C64,
};
use crate::lle::{EmbeddingMatrix, NeighborGraph, WeightConfig, WeightMatrix};
use crate::qsim::{quantum_knn, Shots};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpConfig {
    pub steps: usize,
    pub total_time: f64,
    pub shift: f64,
    pub clock_qubits: usize,
}

impl Default for ExpConfig {
    fn default() -> Self {
        ExpConfig {
            steps: 512,
            total_time: 1.5 * PI,
            shift: 1.0,
            clock_qubits: 10,
        }
    }
}

impl ExpConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.steps >= 1, "DME needs at least one step");
        ensure!(
            self.total_time.is_finite() && self.total_time >= 0.0,
            "total evolution time must be finite and non-negative"
        );
        ensure!(self.shift.is_finite() && self.shift > 0.0, "shift must be positive");
        ensure!(
            (1..=16).contains(&self.clock_qubits),
            "qPCA clock must have 1..=16 qubits"
        );
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.steps as f64
    }
}

fn dme_step_matrix(rho: &CMatrix, sigma: &CMatrix, dt: f64) -> CMatrix {
    let (s, c) = dt.sin_cos();
    let comm = rho * sigma - sigma * rho;
    sigma.scale(c * c) + rho.scale(s * s) - comm * C64::new(0.0, s * c)
}

/// One density-matrix-exponentiation step,
/// `tr_1{ e^{-i S dt} (rho ⊗ sigma) e^{i S dt} }` with `S` the swap.
///
/// Since `S^2 = I`, `e^{-i S dt} = cos(dt) I - i sin(dt) S`, which reduces
/// the partial trace to `cos² sigma + sin² rho - i sin cos [rho, sigma]`.
pub fn dme_step(rho: &DensityOperator, sigma: &DensityOperator, dt: f64) -> Result<DensityOperator> {
    ensure!(
        rho.dim() == sigma.dim(),
        "DME needs equal dimensions, got {} and {}",
        rho.dim(),
        sigma.dim()
    );
    DensityOperator::new(dme_step_matrix(rho.matrix(), sigma.matrix(), dt))
}

/// Applies `steps` DME steps of size `dt` to `sigma`.
pub fn dme_evolve(rho: &DensityOperator, sigma: &DensityOperator, dt: f64, steps: usize) -> Result<DensityOperator> {
    ensure!(rho.dim() == sigma.dim(), "DME needs equal dimensions");
    let mut s = sigma.matrix().clone();
    for _ in 0..steps {
        s = dme_step_matrix(rho.matrix(), &s, dt);
    }
    DensityOperator::new(Hermitian::symmetrized(&s).into_matrix())
}

/// Unitary part of one step of the shifted evolution: the global phase
/// `e^{-i xi dt}` times the rotation `exp(i rho sin(dt) cos(dt))` that one
/// DME step with the reversed swap induces.
fn step_unitary(rho: &Hermitian, shift: f64, dt: f64) -> CMatrix {
    let (s, c) = dt.sin_cos();
    expm_i_hermitian(rho, s * c) * C64::from_polar(1.0, -shift * dt)
}

/// `L`-step product approximating `exp(-i J t)` with `J = xi I - rho`.
pub fn exp_j(rho: &DensityOperator, cfg: &ExpConfig) -> Result<CMatrix> {
    cfg.validate()?;
    let h = rho.as_hermitian();
    let step = step_unitary(&h, cfg.shift, cfg.dt());
    let mut u = CMatrix::identity(rho.dim(), rho.dim());
    for _ in 0..cfg.steps {
        u = &step * u;
    }
    Ok(u)
}

/// Per-clock-value system blocks `B_v = A_v sigma A_v^dagger`, where
/// `A_v = T^{-1} sum_c e^{-2 pi i c v / T} U^c` is the clock-`v` branch of
/// phase estimation with controlled powers of `U`.
pub fn clock_blocks(u: &CMatrix, sigma: &CMatrix, clock_qubits: usize) -> Vec<CMatrix> {
    let n = u.nrows();
    let t = 1usize << clock_qubits;
    let mut powers = Vec::with_capacity(t);
    let mut p = CMatrix::identity(n, n);
    for _ in 0..t {
        let next = u * &p;
        powers.push(p);
        p = next;
    }
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(t);
    let mut a = vec![CMatrix::zeros(n, n); t];
    let columns: Vec<Vec<FftComplex<f64>>> = (0..n * n)
        .into_par_iter()
        .map(|e| {
            let (r, c) = (e % n, e / n);
            let mut buf: Vec<FftComplex<f64>> =
                powers.iter().map(|m| FftComplex::new(m[(r, c)].re, m[(r, c)].im)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    for (e, col) in columns.iter().enumerate() {
        let (r, c) = (e % n, e / n);
        for (v, z) in col.iter().enumerate() {
            a[v][(r, c)] = C64::new(z.re, z.im) / t as f64;
        }
    }
    a.into_par_iter().map(|av| &av * sigma * av.adjoint()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralGroup {
    /// Eigenvalue estimate of `rho`.
    pub eigenvalue: f64,
    pub multiplicity: usize,
    /// Histogram mass captured by the group's clock window.
    pub mass: f64,
    pub clock_bins: Vec<usize>,
    #[serde(skip)]
    pub vectors: CMatrix,
    /// Zoom depth at which the group was resolved.
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QpcaSpectrum {
    pub histogram: Vec<f64>,
    /// All groups, ascending in eigenvalue of `rho`.
    pub groups: Vec<SpectralGroup>,
    pub discarded: SpectralGroup,
    /// The next `d` eigenpairs after the discarded group.
    #[serde(skip)]
    pub selected: Vec<(f64, CVector)>,
    pub warnings: Vec<String>,
}

const PEAK_WINDOW: isize = 2;

/// Clock bin -> eigenvalue of `rho`, for a clock that reads
/// `-(xi - lambda) t / 2 pi mod 1`.
fn bin_eigenvalue(bin: f64, cfg: &ExpConfig) -> f64 {
    let t = (1usize << cfg.clock_qubits) as f64;
    let unit = 2.0 * PI / (t * cfg.total_time);
    let mu = ((t - bin) % t) * unit;
    cfg.shift - mu
}

/// Groups histogram peaks and extracts each group's eigenvectors.
fn analyse(rho: &Hermitian, sigma: &CMatrix, cfg: &ExpConfig) -> Result<(Vec<f64>, Vec<SpectralGroup>)> {
    let dim = rho.dim();
    let rho_dm = DensityOperator::new(rho.matrix().clone())?;
    let u = exp_j(&rho_dm, cfg)?;
    let blocks = clock_blocks(&u, sigma, cfg.clock_qubits);
    let hist: Vec<f64> = blocks.iter().map(|b| trace(b).re).collect();
    let t = hist.len() as isize;
    let at = |k: isize| hist[k.rem_euclid(t) as usize];
    let floor = 0.1 / dim as f64 * hist.iter().sum::<f64>();
    let peaks: Vec<isize> = (0..t)
        .filter(|&k| at(k) >= floor && at(k) >= at(k - 1) && at(k) > at(k + 1))
        .collect();
    ensure!(!peaks.is_empty(), "clock histogram has no resolvable peak");
    // Merge peaks whose windows overlap, walking around the circle.
    let mut clusters: Vec<Vec<isize>> = Vec::new();
    for &p in &peaks {
        match clusters.last_mut() {
            Some(last) if p - last[last.len() - 1] <= 2 * PEAK_WINDOW => last.push(p),
            _ => clusters.push(vec![p]),
        }
    }
    if clusters.len() > 1 {
        let first = clusters[0][0];
        let last = *clusters.last().unwrap().last().unwrap();
        if first + t - last <= 2 * PEAK_WINDOW {
            let head = clusters.remove(0);
            clusters.last_mut().unwrap().extend(head.into_iter().map(|k| k + t));
        }
    }
    let mut groups = Vec::with_capacity(clusters.len());
    for cl in clusters {
        let lo = cl[0] - PEAK_WINDOW;
        let hi = cl[cl.len() - 1] + PEAK_WINDOW;
        let bins: Vec<isize> = (lo..=hi).collect();
        let mass: f64 = bins.iter().map(|&k| at(k)).sum();
        let mean_bin = bins.iter().map(|&k| k as f64 * at(k)).sum::<f64>() / mass;
        let eigenvalue = bin_eigenvalue(mean_bin.rem_euclid(t as f64), cfg);
        let multiplicity = ((dim as f64 * mass).round() as usize).clamp(1, dim);
        let mut cond = CMatrix::zeros(dim, dim);
        for &k in &bins {
            cond += &blocks[k.rem_euclid(t) as usize];
        }
        let eig = eig_hermitian(&Hermitian::symmetrized(&cond));
        let vectors = eig.vectors.columns(dim - multiplicity, multiplicity).into_owned();
        groups.push(SpectralGroup {
            eigenvalue,
            multiplicity,
            mass,
            clock_bins: bins.iter().map(|k| k.rem_euclid(t) as usize).collect(),
            vectors,
            depth: 0,
        });
    }
    groups.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
    Ok((hist, groups))
}

fn check_shift(rho: &Hermitian, cfg: &ExpConfig) -> Result<()> {
    let top = eig_hermitian(rho).values.last().copied().unwrap_or(0.0);
    ensure!(
        cfg.shift >= top - 1e-12,
        "shift {} is below the largest eigenvalue {top}",
        cfg.shift
    );
    ensure!(
        cfg.shift * cfg.total_time < 2.0 * PI,
        "shift times evolution time must stay below 2 pi to avoid clock wrap-around"
    );
    Ok(())
}

/// Spectrum of `rho` from phase estimation over the maximally mixed input.
/// The lowest group (the top of `J`) is discarded and the next `d`
/// eigenpairs are returned in ascending order.
pub fn qpca_spectrum(rho: &DensityOperator, d: usize, cfg: &ExpConfig) -> Result<QpcaSpectrum> {
    cfg.validate()?;
    let dim = rho.dim();
    ensure!(d < dim, "cannot extract {d} eigenvectors beyond the first from dimension {dim}");
    let h = rho.as_hermitian();
    check_shift(&h, cfg)?;
    let sigma = DensityOperator::maximally_mixed(dim).into_matrix();
    let (histogram, groups) = analyse(&h, &sigma, cfg)?;
    let mut warnings = Vec::new();
    for g in &groups {
        if g.multiplicity > 1 {
            warnings.push(format!(
                "clock group at eigenvalue {:.6e} merges {} eigenvalues; returning an orthonormal basis",
                g.eigenvalue, g.multiplicity
            ));
        }
    }
    let discarded = groups[0].clone();
    let mut selected = Vec::new();
    for g in &groups[1..] {
        for col in g.vectors.column_iter().rev() {
            if selected.len() < d {
                let mut v = col.into_owned();
                canonical_phase(&mut v);
                selected.push((g.eigenvalue, v));
            }
        }
    }
    if selected.len() < d {
        warnings.push(format!("only {} of {d} eigenvectors could be resolved", selected.len()));
    }
    Ok(QpcaSpectrum {
        histogram,
        groups,
        discarded,
        selected,
        warnings,
    })
}

/// Groups of `rho` in ascending order with merged groups refined by
/// compressing onto their subspace and re-running the analysis, until
/// `needed` dimensions are resolved or a group proves degenerate.
pub fn zoomed_groups(rho: &DensityOperator, needed: usize, cfg: &ExpConfig, max_depth: usize) -> Result<Vec<SpectralGroup>> {
    cfg.validate()?;
    let h = rho.as_hermitian();
    check_shift(&h, cfg)?;
    refine(&h, needed, cfg, max_depth, 0)
}

fn refine(rho: &Hermitian, needed: usize, cfg: &ExpConfig, max_depth: usize, depth: usize) -> Result<Vec<SpectralGroup>> {
    let dim = rho.dim();
    let sigma = CMatrix::identity(dim, dim).unscale(dim as f64);
    let (_, groups) = analyse(rho, &sigma, cfg)?;
    let scale = trace(rho.matrix()).re;
    let mut out = Vec::new();
    let mut covered = 0;
    for mut g in groups {
        g.depth = depth;
        if covered >= needed || g.multiplicity == 1 || depth >= max_depth {
            covered += g.multiplicity;
            out.push(g);
            continue;
        }
        let v = &g.vectors;
        let compressed = Hermitian::symmetrized(&(v.adjoint() * rho.matrix() * v));
        let s = trace(compressed.matrix()).re;
        if s <= 1e-13 * scale {
            covered += g.multiplicity;
            out.push(g);
            continue;
        }
        let normalized = Hermitian::symmetrized(&compressed.matrix().unscale(s));
        let sub = refine(&normalized, needed - covered, cfg, max_depth, depth + 1)?;
        if sub.len() == 1 {
            covered += g.multiplicity;
            out.push(g);
            continue;
        }
        for sg in sub {
            covered += sg.multiplicity;
            out.push(SpectralGroup {
                eigenvalue: sg.eigenvalue * s,
                multiplicity: sg.multiplicity,
                mass: sg.mass,
                clock_bins: sg.clock_bins,
                vectors: v * &sg.vectors,
                depth: sg.depth,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QlleConfig {
    pub shots: Shots,
    pub weights: WeightConfig,
    pub hhl: HhlConfig,
    pub exp: ExpConfig,
    pub zoom_depth: usize,
}

impl Default for QlleConfig {
    fn default() -> Self {
        QlleConfig {
            shots: Shots::Exact,
            weights: WeightConfig::default(),
            hhl: HhlConfig::inverse(16),
            exp: ExpConfig::default(),
            zoom_depth: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QlleOutput {
    pub graph: NeighborGraph,
    pub weights: WeightMatrix,
    pub rho_m: DensityOperator,
    pub hhl: Vec<HhlDiagnostics>,
    pub groups: Vec<SpectralGroup>,
    pub embedding: EmbeddingMatrix,
    pub eigenvalues: Vec<f64>,
    /// Overlap of the discarded direction with the normalized ones vector.
    pub trivial_overlap: f64,
    pub warnings: Vec<String>,
}

/// Picks the `d` eigenvectors after the trivial one from ascending groups.
pub fn select_embedding(groups: &[SpectralGroup], n: usize, d: usize) -> Result<(CMatrix, Vec<f64>, f64, Vec<String>)> {
    let ones = CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut warnings = Vec::new();
    let mut cols: Vec<CVector> = Vec::new();
    let mut values = Vec::new();
    let first = &groups[0];
    let trivial_overlap;
    if first.multiplicity == 1 {
        trivial_overlap = first.vectors.column(0).dotc(&ones).norm();
    } else {
        // A degenerate bottom group: remove the ones direction from its span.
        warnings.push(format!(
            "lowest group is {}-fold degenerate; projecting out the constant vector",
            first.multiplicity
        ));
        let v = &first.vectors;
        let proj = v.adjoint() * &ones;
        trivial_overlap = proj.norm();
        let rest = v - (v * &proj) * proj.adjoint();
        let svd = rest.svd(true, false);
        let u = svd.u.expect("svd computed with u");
        for i in 0..first.multiplicity - 1 {
            cols.push(u.column(i).into_owned());
            values.push(first.eigenvalue);
        }
    }
    for g in &groups[1..] {
        if g.multiplicity > 1 && cols.len() < d {
            warnings.push(format!(
                "group at eigenvalue {:.3e} stayed {}-fold degenerate",
                g.eigenvalue, g.multiplicity
            ));
        }
        for col in g.vectors.column_iter().rev() {
            cols.push(col.into_owned());
            values.push(g.eigenvalue);
        }
    }
    ensure!(cols.len() >= d, "only {} nontrivial eigenvectors resolved, {d} needed", cols.len());
    cols.truncate(d);
    values.truncate(d);
    Ok((CMatrix::from_columns(&cols), values, trivial_overlap, warnings))
}

/// Quantum neighbor search, HHL weights, qRAM target operator and qPCA,
/// composed into a d×N embedding.
pub fn embed_quantum(data: &DataMatrix, k: usize, d: usize, cfg: &QlleConfig) -> Result<QlleOutput> {
    let n = data.len();
    ensure!(d >= 1 && d < n, "embedding dimension must lie in 1..N-1");
    let graph = quantum_knn(data, k, cfg.shots).map_err(|e| e.in_stage("quantum-knn"))?;
    let (weights, hhl) = hhl_weights(data, &graph, &cfg.weights, &cfg.hhl).map_err(|e| e.in_stage("hhl-weights"))?;
    let rho_m = build_rho_m_qram(&weights).map_err(|e| e.in_stage("rho-m"))?;
    let groups = zoomed_groups(&rho_m, d + 1, &cfg.exp, cfg.zoom_depth).map_err(|e| e.in_stage("qpca"))?;
    let (vecs, eigenvalues, trivial_overlap, warnings) = select_embedding(&groups, n, d).map_err(|e| e.in_stage("qpca"))?;
    let scale = (n as f64).sqrt();
    let y = DMatrix::from_fn(d, n, |r, c| {
        let mut v = vecs.column(r).into_owned();
        canonical_phase(&mut v);
        v[c].re * scale
    });
    Ok(QlleOutput {
        graph,
        weights,
        rho_m,
        hhl,
        groups,
        embedding: EmbeddingMatrix::new(y)?,
        eigenvalues,
        trivial_overlap,
        warnings,
    })
}
