//! CSV tables and JSON sidecars.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use rcfcs::correlations::CorrelationTrace;
use rcfcs::sweep::SweepTable;

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_csv(path: &Path, header: &[String], records: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &CorrelationTrace) -> Result<()> {
    let header = vec!["tau".to_string(), "c".to_string()];
    let rows: Vec<Vec<String>> = trace
        .taus
        .iter()
        .zip(&trace.values)
        .map(|(t, c)| vec![fmt(*t), fmt(*c)])
        .collect();
    write_csv(path, &header, &rows)
}

/// Provenance record written next to every table.
#[derive(Serialize)]
pub struct Sidecar<'a, C: Serialize> {
    pub program: &'static str,
    pub version: &'static str,
    pub created_unix: u64,
    pub command: Vec<String>,
    pub config: &'a C,
    pub outputs: Vec<String>,
    pub rows: usize,
    pub failed: usize,
}

impl<'a, C: Serialize> Sidecar<'a, C> {
    pub fn new(config: &'a C, outputs: Vec<String>, rows: usize, failed: usize) -> Self {
        Sidecar {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command: std::env::args().collect(),
            config,
            outputs,
            rows,
            failed,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub struct SweepFiles {
    pub table: PathBuf,
    pub sidecar: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// `<dir>/<name>.csv`, `<dir>/<name>.json` and, for correlation outputs,
/// `<dir>/<name>_corr/point_<index>.csv`.
pub fn write_sweep(table: &SweepTable, dir: &Path, name: &str) -> Result<SweepFiles> {
    let csv_path = dir.join(format!("{name}.csv"));
    write_csv(&csv_path, &table.header(), &table.records())?;
    let mut traces = Vec::new();
    for row in &table.rows {
        if let Some(tr) = &row.correlation {
            let p = dir
                .join(format!("{name}_corr"))
                .join(format!("point_{:04}.csv", row.point.index));
            write_trace(&p, tr)?;
            traces.push(p);
        }
    }
    let sidecar = dir.join(format!("{name}.json"));
    let mut outputs = vec![csv_path.display().to_string()];
    outputs.extend(traces.iter().map(|p| p.display().to_string()));
    Sidecar::new(&table.spec, outputs, table.rows.len(), table.n_failed()).write(&sidecar)?;
    Ok(SweepFiles {
        table: csv_path,
        sidecar,
        traces,
    })
}
