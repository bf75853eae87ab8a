//! CSV writers for traces and metrics.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use fvq_core::LossBreakdown;
use serde::Serialize;

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    batch: usize,
    rec: f64,
    reg: f64,
    cls: f64,
    total: f64,
    lower_bound: f64,
}

pub fn write_vae_trace(path: &Path, trace: &[LossBreakdown]) -> Result<()> {
    write_rows(
        path,
        trace.iter().enumerate().map(|(batch, l)| TraceRow {
            batch,
            rec: l.rec,
            reg: l.reg,
            cls: l.cls,
            total: l.total,
            lower_bound: l.lower_bound,
        }),
    )
}

pub fn write_em_trace(path: &Path, log_likelihoods: &[f64]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        iteration: usize,
        log_likelihood: f64,
    }
    write_rows(
        path,
        log_likelihoods.iter().enumerate().map(|(iteration, &log_likelihood)| Row {
            iteration,
            log_likelihood,
        }),
    )
}

pub fn write_metrics(path: &Path, metrics: &BTreeMap<String, f64>) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        metric: &'a str,
        value: f64,
    }
    write_rows(path, metrics.iter().map(|(metric, &value)| Row { metric, value }))
}
