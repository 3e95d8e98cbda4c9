use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dixlab::cli::{run, write_artifacts};
use dixlab::config::{ExperimentConfig, NGrid, Pipeline};
use dixlab::{Error, Result};

#[derive(Parser)]
#[command(name = "dixlab", version, about = "Residues, torus quantization and Dixmier-trace surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one pipeline and write its CSV and JSON report.
    Run(Overrides),
    /// Run a pipeline over a list of truncations K.
    Sweep(Overrides),
}

/// Flags mirror the config keys and override the file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// residue, connes, nonmeasurable, integrate, spectral-formula, modulation or sweep.
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Smallest n of an integer window.
    #[arg(long)]
    n_min: Option<u64>,
    /// Largest n of an integer window.
    #[arg(long)]
    n_max: Option<u64>,
    /// Comma-separated truncations for a sweep.
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    /// Pipeline run at each K of a sweep.
    #[arg(long)]
    sweep_pipeline: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Matrix-size budget (also read from DIXLAB_MAX_N).
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// CSV file name inside the output directory.
    #[arg(long)]
    csv: Option<String>,
    /// Report file name inside the output directory.
    #[arg(long)]
    report: Option<String>,
}

fn load(o: &Overrides, sweep: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg: ExperimentConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(p) = &o.pipeline {
                cfg.pipeline = Pipeline::parse(p)?;
            }
            cfg
        }
        None => {
            let p = match (&o.pipeline, sweep) {
                (Some(p), _) => Pipeline::parse(p)?,
                (None, true) => Pipeline::Sweep,
                (None, false) => return Err(Error::Config("either --config or --pipeline is required".into())),
            };
            ExperimentConfig::new(p)
        }
    };
    if sweep && cfg.pipeline != Pipeline::Sweep {
        cfg.sweep.pipeline = cfg.pipeline;
        cfg.pipeline = Pipeline::Sweep;
    }
    if let Some(v) = o.d {
        cfg.d = v;
    }
    if let Some(v) = o.k {
        cfg.k = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if o.n_min.is_some() || o.n_max.is_some() {
        let (lo, hi) = match &cfg.n_grid {
            Some(NGrid::Range { min, max, .. }) => (*min, *max),
            _ => (1, 1),
        };
        cfg.n_grid = Some(NGrid::Range { min: o.n_min.unwrap_or(lo), max: o.n_max.unwrap_or(hi), step: 1 });
    }
    if let Some(v) = &o.k_list {
        cfg.sweep.k_list = v.clone();
    }
    if let Some(v) = &o.sweep_pipeline {
        cfg.sweep.pipeline = Pipeline::parse(v)?;
    }
    if let Some(v) = o.workers {
        cfg.sweep.workers = v;
    }
    if let Some(v) = o.max_n {
        cfg.max_n = Some(v);
    }
    if let Some(v) = &o.out_dir {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = &o.csv {
        cfg.output.csv = Some(v.clone());
    }
    if let Some(v) = &o.report {
        cfg.output.report = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(o: &Overrides, sweep: bool) -> Result<u8> {
    let cfg = load(o, sweep)?;
    let out = run(&cfg)?;
    let paths = write_artifacts(&cfg, &out)?;
    let verdict = &out.report["verdict"]["kind"];
    eprintln!(
        "{}: {} (verdict {verdict}); wrote {} and {}",
        cfg.pipeline.name(),
        if out.passed { "pass" } else { "fail" },
        paths.csv.display(),
        paths.report.display()
    );
    Ok(out.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the execution-error code; 2 is reserved for verdicts
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(o) => execute(o, false),
        Command::Sweep(o) => execute(o, true),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
