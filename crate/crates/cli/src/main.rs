use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qlle_core::pipeline::{run, Dataset, PipelineKind, RunConfig};
use qlle_core::QlleError;

/// Classical and simulated quantum locally linear embedding.
///
/// Settings come from the optional TOML file first; flags given on the
/// command line override them.
#[derive(Debug, Parser)]
#[command(name = "qlle", version)]
struct Cli {
    /// TOML configuration with [pipeline], [weights], [hhl], [qpca] and [vqlle] tables.
    #[arg(long)]
    config: Option<PathBuf>,

    /// `s-curve`, `swiss-roll` or the path of a CSV file.
    #[arg(long)]
    dataset: Option<Dataset>,

    /// Number of generated points.
    #[arg(long)]
    n: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Neighbors per point.
    #[arg(long)]
    k: Option<usize>,

    /// Embedding dimension.
    #[arg(long)]
    d: Option<usize>,

    /// `classical`, `qlle`, `vqlle-e2e` or `vqlle-vqe`.
    #[arg(long)]
    pipeline: Option<PipelineKind>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Skip the classical reference run and its comparison metrics.
    #[arg(long)]
    no_oracle: bool,

    /// Write the representative circuit to circuit.txt.
    #[arg(long)]
    dump_circuit: bool,

    /// Write the optimizer trace to trace.csv.
    #[arg(long)]
    trace: bool,

    /// Measurement shots for overlap estimates; 0 keeps exact probabilities.
    #[arg(long)]
    shots: Option<u64>,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, QlleError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str(&text).map_err(|e| QlleError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let p = &mut cfg.pipeline;
        if let Some(v) = &self.dataset {
            p.dataset = v.clone();
        }
        if let Some(v) = self.n {
            p.n = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.k {
            p.k = v;
        }
        if let Some(v) = self.d {
            p.d = v;
        }
        if let Some(v) = self.pipeline {
            p.kind = v;
        }
        if let Some(v) = &self.out {
            p.out = v.clone();
        }
        if let Some(v) = self.shots {
            p.shots = v;
        }
        p.oracle &= !self.no_oracle;
        p.dump_circuit |= self.dump_circuit;
        p.trace |= self.trace;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.config().and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qlle: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(report) => {
            let p = &cfg.pipeline;
            println!(
                "{} on {} (n = {}, k = {}, d = {}): wrote {}",
                p.kind,
                p.dataset,
                report.embedding.n(),
                p.k,
                p.d,
                p.out.display()
            );
            for (name, value) in &report.metrics {
                println!("  {name:<24} {value:.6e}");
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e @ QlleError::Config(_)) => {
            eprintln!("qlle: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("qlle: {e}");
            ExitCode::FAILURE
        }
    }
}
