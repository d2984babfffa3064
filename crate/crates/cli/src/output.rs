//! CSV and manifest writers.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use sgpr_core::experiments::{ExperimentConfig, GridRow, MetricsReport, MonteCarloOutcome, PointRecord, ReplicateRecord};
use sgpr_core::gp_full::BoundaryWarning;

pub const RESULTS_COLUMNS: [&str; 15] = [
    "n", "d", "alpha", "gamma", "kernel", "design", "m", "delta", "coverage", "length_mean", "length_sd", "rmse",
    "nlpd_mean", "nlpd_sd", "seed",
];

pub const REPLICATES_COLUMNS: [&str; 16] = [
    "experiment", "replicate", "seed", "method", "m", "sigma2", "sigma2_boundary", "lengthscale", "truth", "mean",
    "variance", "lower", "upper", "length", "covered", "nlpd_term",
];

pub const GRID_COLUMNS: [&str; 9] = ["experiment", "label", "m", "x", "mean", "variance", "lower", "upper", "truth"];

/// 17 significant digits, so values round-trip exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path, header: &[&str]) -> anyhow::Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

fn results_row(cfg: &ExperimentConfig, report: &MetricsReport) -> Vec<String> {
    vec![
        cfg.n.to_string(),
        cfg.dimension().to_string(),
        num(cfg.truth.smoothness()),
        num(cfg.kernel.gamma),
        cfg.kernel.family.short_name().to_string(),
        cfg.design.name(),
        report.m_used.to_string(),
        num(cfg.delta),
        num(report.coverage),
        num(report.length_mean),
        num(report.length_sd),
        num(report.rmse),
        num(report.nlpd_mean),
        num(report.nlpd_sd),
        cfg.master_seed.to_string(),
    ]
}

/// One row per experiment; experiments with `compare_full` get a second row for the full posterior (`m = n`).
pub fn write_results(path: &Path, runs: &[(ExperimentConfig, MonteCarloOutcome)]) -> anyhow::Result<()> {
    let mut w = writer(path, &RESULTS_COLUMNS)?;
    for (cfg, out) in runs {
        w.write_record(results_row(cfg, &out.sparse))?;
        if let Some(full) = &out.full {
            w.write_record(results_row(cfg, full))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn boundary_name(b: Option<BoundaryWarning>) -> &'static str {
    match b {
        None => "",
        Some(BoundaryWarning::Lower) => "lower",
        Some(BoundaryWarning::Upper) => "upper",
    }
}

fn replicate_row(name: &str, r: &ReplicateRecord, method: &str, p: &PointRecord) -> Vec<String> {
    vec![
        name.to_string(),
        r.index.to_string(),
        r.seed.to_string(),
        method.to_string(),
        p.rank.to_string(),
        num(r.sigma2),
        boundary_name(r.boundary).to_string(),
        r.lengthscale.map(num).unwrap_or_default(),
        num(r.truth),
        num(p.mean),
        num(p.variance),
        num(p.interval.lower()),
        num(p.interval.upper()),
        num(p.interval.length()),
        u8::from(p.covered).to_string(),
        num(p.nlpd_term),
    ]
}

pub fn write_replicates(path: &Path, runs: &[(ExperimentConfig, MonteCarloOutcome)]) -> anyhow::Result<()> {
    let mut w = writer(path, &REPLICATES_COLUMNS)?;
    for (cfg, out) in runs {
        for r in &out.records {
            w.write_record(replicate_row(&cfg.name, r, "sgpr", &r.sparse))?;
            if let Some(full) = &r.full {
                w.write_record(replicate_row(&cfg.name, r, "full", full))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, rows: &[(String, Vec<GridRow>)]) -> anyhow::Result<()> {
    let mut w = writer(path, &GRID_COLUMNS)?;
    for (name, grid) in rows {
        for g in grid {
            w.write_record([
                name.clone(),
                g.label.clone(),
                g.m.to_string(),
                num(g.x[0]),
                num(g.mean),
                num(g.variance),
                num(g.lower),
                num(g.upper),
                num(g.truth),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Outputs {
    pub results: PathBuf,
    pub replicates: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub config_path: PathBuf,
    pub started: String,
    pub finished: String,
    pub workers: usize,
    pub experiments: Vec<String>,
    pub outputs: Outputs,
    /// The effective configuration that was hashed.
    pub config: serde_json::Value,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}
