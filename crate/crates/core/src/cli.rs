//! Experiment runner behind the `dixlab` binary: executes a configured
//! pipeline and writes its series CSV and report JSON.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};
use crate::quantize::MatrixBudget;
use crate::symbol::QuadSpec;
use crate::traces::{
    IntegralReference, Report, SeriesTable, connes_check, l2_integration_check, modulation_check,
    nonmeasurable_check, residue_check, torus_spectral_formula_check,
};

/// Result of one pipeline run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pipeline: Pipeline,
    pub passed: bool,
    pub csv: String,
    pub report: serde_json::Value,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.passed { 0 } else { 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub report: PathBuf,
}

pub fn budget(cfg: &ExperimentConfig) -> MatrixBudget {
    cfg.max_n.map(MatrixBudget).unwrap_or_else(MatrixBudget::from_env)
}

fn finish<D: Serialize>(pipeline: Pipeline, cfg: &ExperimentConfig, report: Report<D>) -> Result<RunOutcome> {
    let csv = report.series.to_csv();
    let mut value = serde_json::to_value(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    value["inputs"]["seed"] = json!(cfg.seed);
    Ok(RunOutcome { pipeline, passed: report.passed, csv, report: value })
}

fn usize_grid(cfg: &ExperimentConfig, pipeline: Pipeline, k: usize) -> Result<Vec<usize>> {
    Ok(cfg.n_grid_for(pipeline, k).integers()?.into_iter().map(|n| n as usize).collect())
}

/// Runs one pipeline at truncation `k` (ignored by symbol-level pipelines).
pub fn run_pipeline(cfg: &ExperimentConfig, pipeline: Pipeline, k: usize) -> Result<RunOutcome> {
    let d = cfg.d;
    let quad = QuadSpec::for_dim(d);
    let tol = &cfg.tolerances;
    match pipeline {
        Pipeline::Residue => {
            let sym = cfg.symbol_config().build(d)?;
            let log_n = cfg.n_grid_for(pipeline, k).log_values()?;
            let r = residue_check(&sym, &log_n, &Default::default(), tol.measurability, &quad)?;
            finish(pipeline, cfg, r)
        }
        Pipeline::Nonmeasurable => {
            let sym = cfg.symbol_config().build(d)?;
            let t = cfg.n_grid_for(pipeline, k).t_values()?;
            let r = nonmeasurable_check(&sym, &t, tol.min_band_width, tol.measurability, tol.oracle, &quad)?;
            finish(pipeline, cfg, r)
        }
        Pipeline::Connes => {
            let sym = cfg.symbol_config().build(d)?;
            let window = usize_grid(cfg, pipeline, k)?;
            let r = connes_check(&sym, k, &window, budget(cfg), &quad, tol.relative_gap, &tol.trend)?;
            finish(pipeline, cfg, r)
        }
        Pipeline::SpectralFormula => {
            let sym = cfg.symbol_config().build(d)?;
            let window = usize_grid(cfg, pipeline, k)?;
            let r = torus_spectral_formula_check(
                &sym,
                k,
                &window,
                budget(cfg),
                &quad,
                tol.relative_gap,
                tol.absolute_gap,
            )?;
            finish(pipeline, cfg, r)
        }
        Pipeline::Modulation => {
            let sym = cfg.symbol_config().build(d)?;
            let r = modulation_check(&sym, k, budget(cfg), &quad, &tol.trend)?;
            finish(pipeline, cfg, r)
        }
        Pipeline::Integrate => {
            let (f, integral) = cfg.integrate.function.build(d)?;
            let eigen_k = if cfg.pipeline == Pipeline::Sweep { Some(k) } else { cfg.integrate.eigen_k };
            let r = l2_integration_check(
                &*f,
                d,
                cfg.integrate.diagonal_n,
                IntegralReference::Exact(integral),
                eigen_k,
                budget(cfg),
                quad.x_nodes,
                tol.integration,
            )?;
            finish(pipeline, cfg, r)
        }
        Pipeline::Sweep => Err(Error::Config("sweep cannot be nested".into())),
    }
}

/// Executes the configured pipeline without writing anything.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.pipeline == Pipeline::Sweep {
        return sweep(cfg);
    }
    run_pipeline(cfg, cfg.pipeline, cfg.k)
}

#[derive(Debug, Clone, Serialize)]
struct SweepEntry {
    #[serde(rename = "K")]
    k: usize,
    passed: bool,
    error: Option<String>,
    /// Series value at the largest `n`.
    n: Option<String>,
    value: Option<[f64; 2]>,
    verdict: Option<serde_json::Value>,
}

/// Runs the inner pipeline for every `K` on a worker pool and gathers rows
/// `K,n,value_re,value_im` in `K` order. Per-`K` failures are recorded and
/// the sweep continues.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let start = std::time::Instant::now();
    let ks = &cfg.sweep.k_list;
    if ks.is_empty() {
        return Err(Error::Config("sweep needs a non-empty K list".into()));
    }
    let inner = cfg.sweep.pipeline;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunOutcome>> = pool.install(|| ks.par_iter().map(|&k| run_pipeline(cfg, inner, k)).collect());

    let mut csv = String::from("K,n,value_re,value_im\n");
    let mut entries = Vec::with_capacity(ks.len());
    for (&k, res) in ks.iter().zip(results) {
        match res {
            Ok(out) => {
                let series = &out.report["series"];
                let table: Vec<(String, f64, f64)> = series["n"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .zip(series["value_re"].as_array().into_iter().flatten())
                    .zip(series["value_im"].as_array().into_iter().flatten())
                    .map(|((n, re), im)| {
                        (n.as_str().unwrap_or_default().to_string(), re.as_f64().unwrap_or(f64::NAN), im.as_f64().unwrap_or(f64::NAN))
                    })
                    .collect();
                for (n, re, im) in &table {
                    csv.push_str(&format!("{k},{n},{},{}\n", fmt_f64(*re), fmt_f64(*im)));
                }
                let last = table.last();
                entries.push(SweepEntry {
                    k,
                    passed: out.passed,
                    error: None,
                    n: last.map(|t| t.0.clone()),
                    value: last.map(|t| [t.1, t.2]),
                    verdict: Some(out.report["verdict"].clone()),
                });
            }
            Err(e) => entries.push(SweepEntry { k, passed: false, error: Some(e.to_string()), n: None, value: None, verdict: None }),
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    let report = json!({
        "pipeline": "sweep",
        "inputs": { "inner": inner.name(), "K": ks, "d": cfg.d, "seed": cfg.seed },
        "series": SeriesTable::default(),
        "band": null,
        "verdict": { "kind": if passed { "consistent" } else { "inconsistent" } },
        "passed": passed,
        "tolerances": cfg.tolerances,
        "summary": entries,
        "runtime": start.elapsed().as_secs_f64(),
    });
    Ok(RunOutcome { pipeline: Pipeline::Sweep, passed, csv, report })
}

/// Output paths for a config.
pub fn artifact_paths(cfg: &ExperimentConfig) -> Artifacts {
    let name = cfg.pipeline.name();
    let dir: &Path = &cfg.output.dir;
    Artifacts {
        csv: dir.join(cfg.output.csv.clone().unwrap_or_else(|| format!("{name}.csv"))),
        report: dir.join(cfg.output.report.clone().unwrap_or_else(|| format!("{name}.json"))),
    }
}

pub fn write_artifacts(cfg: &ExperimentConfig, out: &RunOutcome) -> Result<Artifacts> {
    let paths = artifact_paths(cfg);
    write_atomic(&paths.csv, out.csv.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    json.push('\n');
    write_atomic(&paths.report, json.as_bytes())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SymbolConfig;

    #[test]
    fn zero_symbol_residue_run() {
        let mut cfg = ExperimentConfig::new(Pipeline::Residue);
        cfg.symbol = Some(SymbolConfig::Zero);
        let out = run(&cfg).unwrap();
        assert!(out.passed);
        assert_eq!(out.report["verdict"]["kind"], "measurable");
        let rows: Vec<&str> = out.csv.lines().collect();
        assert_eq!(rows[0], "n,value_re,value_im");
        assert!(rows[1..].iter().all(|r| r.ends_with(",0,0")));
        assert_eq!(rows.len(), 101);
    }

    #[test]
    fn sweep_rows_are_in_k_order() {
        let mut cfg = ExperimentConfig::new(Pipeline::Sweep);
        cfg.sweep.k_list = vec![16, 32];
        cfg.sweep.workers = 2;
        let out = run(&cfg).unwrap();
        let ks: Vec<usize> = out.csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ks.first(), Some(&16));
        assert_eq!(ks.last(), Some(&32));
    }

    #[test]
    fn sweep_records_failures() {
        let mut cfg = ExperimentConfig::new(Pipeline::Sweep);
        cfg.sweep.k_list = vec![16, 10_000];
        let out = run(&cfg).unwrap();
        assert!(!out.passed);
        assert!(out.report["summary"][1]["error"].as_str().unwrap().contains("budget"));
    }
}
