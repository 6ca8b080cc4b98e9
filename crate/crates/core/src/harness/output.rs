//! CSV and manifest emission.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::metrics::{MetricsRow, METRIC_NAMES};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::model::EpisodeLog;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn metrics_header() -> Vec<String> {
    let mut h = vec!["policy".to_string(), "n_users".to_string(), "episodes".to_string()];
    for m in METRIC_NAMES {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

fn metrics_record(row: &MetricsRow) -> Vec<String> {
    let mut r = vec![row.policy.clone(), row.n_users.to_string(), row.episodes.to_string()];
    for (mean, std) in row.stats {
        r.push(mean.to_string());
        r.push(std.to_string());
    }
    r
}

/// Appends rows to `metrics.csv` as they arrive.
pub struct MetricsWriter {
    inner: csv::Writer<fs::File>,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut inner = csv::Writer::from_path(dir.join(METRICS_FILE))?;
        inner.write_record(metrics_header())?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.write_record(metrics_record(row))?;
        self.inner.flush()?;
        Ok(())
    }
}

/// One file per metric, `<metric>_vs_users.csv`, with a column per policy.
pub fn write_plot_data(rows: &[MetricsRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut policies: Vec<&str> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
        if !counts.contains(&r.n_users) {
            counts.push(r.n_users);
        }
    }
    for (k, m) in METRIC_NAMES.iter().enumerate() {
        let mut w = csv::Writer::from_path(dir.join(format!("{m}_vs_users.csv")))?;
        let mut header = vec!["n_users".to_string()];
        header.extend(policies.iter().map(|p| p.to_string()));
        w.write_record(&header)?;
        for &n in &counts {
            let mut rec = vec![n.to_string()];
            for p in &policies {
                let cell = rows
                    .iter()
                    .find(|r| r.n_users == n && r.policy == *p)
                    .map(|r| r.stats[k].0.to_string())
                    .unwrap_or_default();
                rec.push(cell);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
}

pub fn write_manifest(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: cfg.canonical_hash(),
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Writes `metrics.csv`, the per-metric plot data and the manifest.
pub fn emit_outputs(rows: &[MetricsRow], cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut w = MetricsWriter::create(dir)?;
    for r in rows {
        w.write(r)?;
    }
    write_plot_data(rows, dir)?;
    write_manifest(cfg, dir)
}

/// Per-slot, per-user trace of one episode.
pub fn write_episode_csv(log: &EpisodeLog, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "slot",
        "user",
        "active",
        "bandwidth_hz",
        "compute_hz",
        "delay_s",
        "deadline_s",
        "timely",
        "predicted_risk",
        "realized_risk",
        "budget_before",
        "budget_after",
        "potential",
        "iterations",
        "converged",
    ])?;
    for s in &log.slots {
        for i in 0..log.users.len() {
            let deadline = s.tasks[i].map(|t| t.deadline_s.to_string()).unwrap_or_default();
            w.write_record([
                s.slot.to_string(),
                i.to_string(),
                u8::from(s.active[i]).to_string(),
                s.profile[i].bandwidth.to_string(),
                s.profile[i].compute.to_string(),
                s.realized_delay[i].to_string(),
                deadline,
                s.timely[i].to_string(),
                s.predicted_risk[i].to_string(),
                s.realized_risk[i].to_string(),
                s.budgets_before[i].to_string(),
                s.budgets_after[i].to_string(),
                s.potential.to_string(),
                s.iterations.to_string(),
                u8::from(s.converged).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
