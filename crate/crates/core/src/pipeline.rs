//! Run orchestration: dataset loading, the four pipelines, oracle
//! comparison and output files.
//!
//! Everything written to `embedding.csv`, `report.json` and `plot.svg` is a
//! deterministic function of the configuration (minus the output path);
//! wall-clock timings go to the separate `timings.json`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::datasets::{load_csv, sample_s_curve, sample_swiss_roll, save_matrix_csv, DataMatrix, ManifoldRanges};
use crate::error::{QlleError, Result};
use crate::hhl::{build_rho_m_qram, weight_column_circuit, HhlConfig};
use crate::lle::{classical_lle, EmbeddingMatrix, WeightConfig, WeightMatrix};
use crate::metrics::compare;
use crate::qpca::{embed_quantum, ExpConfig, QlleConfig};
use crate::qsim::{quantum_knn, Circuit, Shots};
use crate::vqlle::{
    embed_end_to_end, embed_vqe, solve_weights_variational, AdaGradConfig, Entangler, TraceRow, VariationalEmbedding,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Dataset {
    SCurve,
    SwissRoll,
    Csv(PathBuf),
}

impl FromStr for Dataset {
    type Err = QlleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s-curve" => Ok(Dataset::SCurve),
            "swiss-roll" => Ok(Dataset::SwissRoll),
            "" => Err(QlleError::config("dataset must be s-curve, swiss-roll or a CSV path")),
            path => Ok(Dataset::Csv(PathBuf::from(path))),
        }
    }
}

impl TryFrom<String> for Dataset {
    type Error = QlleError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Dataset> for String {
    fn from(d: Dataset) -> String {
        d.to_string()
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dataset::SCurve => f.write_str("s-curve"),
            Dataset::SwissRoll => f.write_str("swiss-roll"),
            Dataset::Csv(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    Classical,
    Qlle,
    VqlleE2e,
    VqlleVqe,
}

impl FromStr for PipelineKind {
    type Err = QlleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(PipelineKind::Classical),
            "qlle" => Ok(PipelineKind::Qlle),
            "vqlle-e2e" => Ok(PipelineKind::VqlleE2e),
            "vqlle-vqe" => Ok(PipelineKind::VqlleVqe),
            other => Err(QlleError::config(format!(
                "unknown pipeline `{other}`; expected classical, qlle, vqlle-e2e or vqlle-vqe"
            ))),
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineKind::Classical => "classical",
            PipelineKind::Qlle => "qlle",
            PipelineKind::VqlleE2e => "vqlle-e2e",
            PipelineKind::VqlleVqe => "vqlle-vqe",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub dataset: Dataset,
    /// Point count of generated datasets; CSV inputs use every row.
    pub n: usize,
    pub seed: u64,
    pub k: usize,
    pub d: usize,
    pub kind: PipelineKind,
    pub out: PathBuf,
    pub oracle: bool,
    pub dump_circuit: bool,
    pub trace: bool,
    /// Measurement shots for overlap estimates; 0 means exact probabilities.
    pub shots: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            dataset: Dataset::SCurve,
            n: 32,
            seed: 7,
            k: 4,
            d: 2,
            kind: PipelineKind::Classical,
            out: PathBuf::from("out"),
            oracle: true,
            dump_circuit: false,
            trace: false,
            shots: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QpcaSection {
    #[serde(flatten)]
    pub exp: ExpConfig,
    pub zoom_depth: usize,
}

impl Default for QpcaSection {
    fn default() -> Self {
        QpcaSection {
            exp: ExpConfig::default(),
            zoom_depth: QlleConfig::default().zoom_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqlleConfig {
    pub weight_layers: usize,
    pub embed_layers: usize,
    pub entangler: Entangler,
    /// Constraint penalty of the end-to-end cost.
    pub penalty: f64,
    /// Deflation weight; `2` when absent.
    pub alpha: Option<f64>,
    pub optimizer: AdaGradConfig,
}

impl Default for VqlleConfig {
    fn default() -> Self {
        VqlleConfig {
            weight_layers: 4,
            embed_layers: 4,
            entangler: Entangler::Ring,
            penalty: 10.0,
            alpha: None,
            optimizer: AdaGradConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineSection,
    pub weights: WeightConfig,
    pub hhl: HhlConfig,
    pub qpca: QpcaSection,
    pub vqlle: VqlleConfig,
}

fn cfg_check(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(QlleError::config(msg))
    }
}

impl RunConfig {
    /// Checks everything that does not depend on the loaded data.
    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        cfg_check(p.k >= 1, "k must be at least 1")?;
        cfg_check(p.d >= 1, "d must be at least 1")?;
        cfg_check(p.d <= p.k, format!("d = {} exceeds k = {}", p.d, p.k))?;
        if !matches!(p.dataset, Dataset::Csv(_)) {
            self.validate_size(p.n)?;
        }
        let w = &self.weights;
        cfg_check(w.regularization > 0.0 && w.singular_threshold > 0.0, "weight tolerances must be positive")?;
        let v = &self.vqlle;
        cfg_check(v.weight_layers >= 1 && v.embed_layers >= 1, "ansatz layers must be at least 1")?;
        cfg_check(v.penalty >= 0.0 && v.penalty.is_finite(), "penalty must be non-negative")?;
        cfg_check(v.alpha.is_none_or(|a| a > 0.0 && a.is_finite()), "deflation weight must be positive")?;
        let sub = [
            self.hhl.validate(),
            self.qpca.exp.validate(),
            v.optimizer.validate(),
        ];
        for r in sub {
            r.map_err(|e| QlleError::config(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks `k < n` and `d <= n - 1` once the point count is known.
    pub fn validate_size(&self, n: usize) -> Result<()> {
        let p = &self.pipeline;
        cfg_check(p.k < n, format!("k = {} must be smaller than n = {n}", p.k))?;
        cfg_check(p.d < n, format!("d = {} must be smaller than n = {n}", p.d))
    }

    fn qlle_config(&self) -> QlleConfig {
        QlleConfig {
            shots: self.shots(),
            weights: self.weights,
            hhl: self.hhl,
            exp: self.qpca.exp,
            zoom_depth: self.qpca.zoom_depth,
        }
    }

    fn shots(&self) -> Shots {
        Shots::from_count(self.pipeline.shots, self.pipeline.seed)
    }

    /// The configuration as echoed in reports, without the output path.
    fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(p) = v.get_mut("pipeline").and_then(Value::as_object_mut) {
            p.remove("out");
        }
        v
    }
}

/// Data plus a per-point colour scalar.
pub fn load_dataset(cfg: &RunConfig) -> Result<(DataMatrix, Vec<f64>)> {
    let p = &cfg.pipeline;
    match &p.dataset {
        Dataset::SCurve => {
            let s = sample_s_curve(p.n, p.seed, &ManifoldRanges::S_CURVE)?;
            Ok((s.data, s.param))
        }
        Dataset::SwissRoll => {
            let s = sample_swiss_roll(p.n, p.seed, &ManifoldRanges::SWISS_ROLL)?;
            Ok((s.data, s.param))
        }
        Dataset::Csv(path) => {
            let data = load_csv(path)?;
            let n = data.len();
            Ok((data, (0..n).map(|i| i as f64 / n as f64).collect()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub embedding: EmbeddingMatrix,
    pub metrics: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
    pub config: RunConfig,
    pub warnings: Vec<String>,
    pub diagnostics: Value,
}

struct Outcome {
    embedding: EmbeddingMatrix,
    weights: Option<WeightMatrix>,
    diagnostics: Value,
    warnings: Vec<String>,
    circuit: Option<Circuit>,
    traces: Vec<(&'static str, usize, Vec<TraceRow>)>,
}

fn traced(stage: &'static str, traces: &[Vec<TraceRow>]) -> Vec<(&'static str, usize, Vec<TraceRow>)> {
    traces.iter().enumerate().map(|(i, t)| (stage, i, t.clone())).collect()
}

fn variational_outcome(e: VariationalEmbedding, weights: WeightMatrix, mut warnings: Vec<String>, mut traces: Vec<(&'static str, usize, Vec<TraceRow>)>, weight_costs: Vec<f64>) -> Outcome {
    warnings.extend(e.warnings);
    traces.extend(traced("embedding", &e.traces));
    Outcome {
        embedding: e.embedding,
        weights: Some(weights),
        diagnostics: json!({
            "weight_costs": weight_costs,
            "cost": e.cost,
            "eigenvalues": e.eigenvalues,
            "trivial_overlap": e.trivial_overlap,
        }),
        warnings,
        circuit: Some(e.circuit),
        traces,
    }
}

fn execute(cfg: &RunConfig, data: &DataMatrix) -> Result<Outcome> {
    let p = &cfg.pipeline;
    match p.kind {
        PipelineKind::Classical => {
            let r = classical_lle(data, p.k, p.d, &cfg.weights)?;
            Ok(Outcome {
                diagnostics: json!({
                    "eigenvalues": r.diagnostics.eigenvalues,
                    "regularized_points": r.diagnostics.regularized.iter().filter(|f| **f).count(),
                    "reconstruction_residuals": r.diagnostics.reconstruction_residuals,
                }),
                embedding: r.embedding,
                weights: Some(r.weights),
                warnings: Vec::new(),
                circuit: None,
                traces: Vec::new(),
            })
        }
        PipelineKind::Qlle => {
            let q = embed_quantum(data, p.k, p.d, &cfg.qlle_config())?;
            let circuit = if p.dump_circuit {
                Some(weight_column_circuit(data, &q.graph, 0, &cfg.weights, &cfg.hhl).map_err(|e| e.in_stage("circuit"))?)
            } else {
                None
            };
            let fid = q.hhl.iter().filter_map(|h| h.fidelity).fold(1.0, f64::min);
            let succ = q.hhl.iter().map(|h| h.success_probability).fold(1.0, f64::min);
            Ok(Outcome {
                diagnostics: json!({
                    "eigenvalues": q.eigenvalues,
                    "trivial_overlap": q.trivial_overlap,
                    "min_hhl_fidelity": fid,
                    "min_hhl_success_probability": succ,
                    "qpca_groups": q.groups.iter().take(p.d + 1).collect::<Vec<_>>(),
                }),
                embedding: q.embedding,
                weights: Some(q.weights),
                warnings: q.warnings,
                circuit,
                traces: Vec::new(),
            })
        }
        PipelineKind::VqlleE2e | PipelineKind::VqlleVqe => {
            let v = &cfg.vqlle;
            let graph = quantum_knn(data, p.k, cfg.shots()).map_err(|e| e.in_stage("quantum-knn"))?;
            let vw = solve_weights_variational(data, &graph, v.weight_layers, v.entangler, &cfg.weights, &v.optimizer)
                .map_err(|e| e.in_stage("variational-weights"))?;
            let traces = traced("weights", &vw.traces);
            let costs = vw.columns.iter().map(|c| c.cost).collect();
            let e = if p.kind == PipelineKind::VqlleE2e {
                embed_end_to_end(&vw.weights, p.d, v.embed_layers, v.entangler, v.penalty, &v.optimizer)
                    .map_err(|e| e.in_stage("end-to-end"))?
            } else {
                let rho = build_rho_m_qram(&vw.weights).map_err(|e| e.in_stage("rho-m"))?;
                embed_vqe(&rho, p.d, v.embed_layers, v.entangler, v.alpha, &v.optimizer).map_err(|e| e.in_stage("vqe"))?
            };
            Ok(variational_outcome(e, vw.weights, vw.warnings, traces, costs))
        }
    }
}

fn write_trace(path: &Path, traces: &[(&'static str, usize, Vec<TraceRow>)]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        stage: &'a str,
        index: usize,
        restart: usize,
        iteration: usize,
        cost: f64,
        gradient_norm: f64,
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| QlleError::Io(e.into()))?;
    for (stage, index, rows) in traces {
        for r in rows {
            w.serialize(Row {
                stage,
                index: *index,
                restart: r.restart,
                iteration: r.iteration,
                cost: r.cost,
                gradient_norm: r.gradient_norm,
            })
            .map_err(|e| QlleError::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Runs the configured pipeline and writes its outputs. On failure the
/// output directory receives a `FAILED` marker and a report carrying the
/// error.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let clock = Instant::now();
    let (data, labels) = load_dataset(cfg).map_err(|e| e.in_stage("load"))?;
    cfg.validate_size(data.len())?;
    timings.insert("load".to_owned(), clock.elapsed().as_secs_f64());

    let out = &cfg.pipeline.out;
    fs::create_dir_all(out)?;
    let marker = out.join("FAILED");
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    match run_in(cfg, &data, &labels, &mut timings) {
        Ok(r) => Ok(r),
        Err(e) => {
            let msg = e.to_string();
            fs::write(&marker, format!("{msg}\n"))?;
            write_json(
                &out.join("report.json"),
                &json!({ "status": "failed", "error": msg, "config": cfg.echo() }),
            )?;
            write_json(&out.join("timings.json"), &timings)?;
            Err(e)
        }
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let r = f();
    timings.insert(stage.to_owned(), t.elapsed().as_secs_f64());
    r
}

fn run_in(cfg: &RunConfig, data: &DataMatrix, labels: &[f64], timings: &mut BTreeMap<String, f64>) -> Result<RunReport> {
    let p = &cfg.pipeline;
    let out = &p.out;
    let outcome = timed(timings, "pipeline", || execute(cfg, data).map_err(|e| e.in_stage("pipeline")))?;
    let mut warnings = outcome.warnings.clone();

    let oracle = if p.oracle {
        Some(timed(timings, "oracle", || {
            classical_lle(data, p.k, p.d, &cfg.weights).map_err(|e| e.in_stage("oracle"))
        })?)
    } else {
        None
    };

    let y = &outcome.embedding;
    let mut metrics = BTreeMap::new();
    metrics.insert("centering_error".to_owned(), y.centering_error());
    metrics.insert("whitening_error".to_owned(), y.whitening_error());
    if let Some(o) = &oracle {
        metrics.extend(compare(&o.embedding, y, data, p.k).map_err(|e| e.in_stage("metrics"))?);
        if let Some(w) = &outcome.weights {
            let err = (w.matrix() - o.weights.matrix()).amax();
            metrics.insert("weight_linf_error".to_owned(), err);
        }
    }

    let t = Instant::now();
    save_matrix_csv(y.matrix(), out.join("embedding.csv"))?;
    if (2..=3).contains(&y.d()) {
        plot(y, labels, out.join("plot.svg"))?;
    } else {
        warnings.push(format!("no plot for a {}-dimensional embedding", y.d()));
    }
    if p.dump_circuit {
        match &outcome.circuit {
            Some(c) => fs::write(out.join("circuit.txt"), c.to_text())?,
            None => warnings.push("the classical pipeline has no circuit to dump".to_owned()),
        }
    }
    if p.trace {
        if outcome.traces.is_empty() {
            warnings.push("only variational pipelines produce an optimization trace".to_owned());
        } else {
            write_trace(&out.join("trace.csv"), &outcome.traces)?;
        }
    }
    write_json(
        &out.join("report.json"),
        &json!({
            "status": "ok",
            "pipeline": p.kind.to_string(),
            "n": data.len(),
            "d": y.d(),
            "metrics": metrics,
            "diagnostics": outcome.diagnostics,
            "warnings": warnings,
            "config": cfg.echo(),
        }),
    )?;
    timings.insert("write".to_owned(), t.elapsed().as_secs_f64());
    write_json(&out.join("timings.json"), &timings)?;

    Ok(RunReport {
        embedding: outcome.embedding,
        metrics,
        timings: timings.clone(),
        config: cfg.clone(),
        warnings,
        diagnostics: outcome.diagnostics,
    })
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 32.0;

/// Anchor colours of a perceptually ordered map, dark to light.
const PALETTE: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

fn colour(t: f64) -> String {
    let x = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (x.floor() as usize).min(PALETTE.len() - 2);
    let f = x - i as f64;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    let mix = |p: u8, q: u8| (p as f64 + f * (q as f64 - p as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Screen coordinates and depth; 3-D points use a fixed oblique view.
fn project(y: &DMatrix<f64>) -> Vec<(f64, f64, f64)> {
    let (az, el) = (-60f64.to_radians(), 20f64.to_radians());
    y.column_iter()
        .map(|p| {
            if p.len() == 2 {
                (p[0], p[1], 0.0)
            } else {
                let (x, yy, z) = (p[0], p[1], p[2]);
                let u = x * az.cos() - yy * az.sin();
                let w = x * az.sin() + yy * az.cos();
                (u, w * el.sin() + z * el.cos(), w * el.cos() - z * el.sin())
            }
        })
        .collect()
}

/// SVG scatter of a 2- or 3-row embedding coloured by `labels`.
pub fn render_svg(y: &DMatrix<f64>, labels: &[f64]) -> Result<String> {
    let (d, n) = y.shape();
    if n == 0 || d == 0 {
        return Err(QlleError::contract("cannot plot an empty embedding"));
    }
    if !(2..=3).contains(&d) {
        return Err(QlleError::Unsupported(format!("plots need 2 or 3 dimensions, got {d}")));
    }
    if labels.len() != n {
        return Err(QlleError::contract(format!("{} labels for {n} points", labels.len())));
    }
    let pts = project(y);
    let span = |f: fn(&(f64, f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let ((ux, sx), (uy, sy)) = (span(|p| p.0), span(|p| p.1));
    let scale = (SIZE - 2.0 * MARGIN) / sx.max(sy);
    let (lmin, lmax) = labels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));
    let lspan = (lmax - lmin).max(1e-12);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pts[b].2.total_cmp(&pts[a].2).then(a.cmp(&b)));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for i in order {
        let (px, py, _) = pts[i];
        let cx = MARGIN + (px - ux) * scale + (SIZE - 2.0 * MARGIN - sx * scale) / 2.0;
        let cy = SIZE - MARGIN - (py - uy) * scale - (SIZE - 2.0 * MARGIN - sy * scale) / 2.0;
        let _ = writeln!(
            s,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}" stroke="#333333" stroke-width="0.5"/>"##,
            colour((labels[i] - lmin) / lspan)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn plot(y: &EmbeddingMatrix, labels: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(y.matrix(), labels)?;
    fs::write(path, svg)?;
    Ok(())
}
