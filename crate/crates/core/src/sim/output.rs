//! CSV emission. Each file starts with a `#schema=<id>` line followed by
//! a header row; the id changes whenever the columns do.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::montecarlo::{FadingReport, FadingTraceRow, JEstimate, SweepRow};
use super::trial::TraceRow;

pub const J_SCHEMA: &str = "ddpc.j_table.v1";
pub const SWEEP_SCHEMA: &str = "ddpc.sweep.v1";
pub const FADING_SCHEMA: &str = "ddpc.fading.v1";
pub const FADING_TRACE_SCHEMA: &str = "ddpc.fading_trace.v1";
pub const TRACE_SCHEMA: &str = "ddpc.trace.v1";

#[derive(Debug, Serialize)]
struct JRow {
    policy: &'static str,
    k: usize,
    j: f64,
    se: f64,
    mse: f64,
    mse_se: f64,
    mean_power: f64,
    drop_rate: f64,
    trials: u64,
}

fn j_rows(estimates: &[JEstimate]) -> Vec<JRow> {
    estimates
        .iter()
        .flat_map(|e| {
            (0..e.j.len()).map(move |i| JRow {
                policy: e.policy,
                k: i + 1,
                j: e.j[i],
                se: e.j_se[i],
                mse: e.mse[i],
                mse_se: e.mse_se[i],
                mean_power: e.mean_power,
                drop_rate: e.drop_rate,
                trials: e.trials,
            })
        })
        .collect()
}

/// Writes `rows` as CSV after the schema line.
pub fn write_csv<W: Write, T: Serialize>(mut out: W, schema: &str, rows: &[T]) -> io::Result<()> {
    writeln!(out, "#schema={schema}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()
}

fn write_file<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> io::Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(io::BufWriter::new(File::create(path)?), schema, rows)?;
    Ok(path.to_path_buf())
}

/// `<prefix><suffix>`, e.g. `out/run` + `_j.csv`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_j_table<W: Write>(out: W, estimates: &[JEstimate]) -> io::Result<()> {
    write_csv(out, J_SCHEMA, &j_rows(estimates))
}

pub fn write_j_file(prefix: &Path, estimates: &[JEstimate]) -> io::Result<PathBuf> {
    write_file(&with_suffix(prefix, "_j.csv"), J_SCHEMA, &j_rows(estimates))
}

pub fn write_sweep_file(prefix: &Path, rows: &[SweepRow]) -> io::Result<PathBuf> {
    write_file(&with_suffix(prefix, "_sweep.csv"), SWEEP_SCHEMA, rows)
}

pub fn write_trace_file(prefix: &Path, rows: &[TraceRow]) -> io::Result<PathBuf> {
    write_file(&with_suffix(prefix, "_trace.csv"), TRACE_SCHEMA, rows)
}

/// Writes the aggregate table and the single-realization trace.
pub fn write_fading_files(prefix: &Path, report: &FadingReport) -> io::Result<(PathBuf, PathBuf)> {
    let agg = write_file(
        &with_suffix(prefix, "_fading.csv"),
        FADING_SCHEMA,
        &j_rows(&[report.data_driven.clone(), report.inversion.clone()]),
    )?;
    let trace: &[FadingTraceRow] = &report.trace;
    let tr = write_file(&with_suffix(prefix, "_fading_trace.csv"), FADING_TRACE_SCHEMA, trace)?;
    Ok((agg, tr))
}
