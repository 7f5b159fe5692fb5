use std::io::Write;
use std::path::Path;

use csv::{Terminator, WriterBuilder};
use gsgd_core::optimizer::{IterRow, ProbeRow};
use serde::Serialize;

use crate::error::CliError;

pub const RUN_HEADER: [&str; 5] = ["k", "f", "m_norm", "eta", "theta"];
pub const PROBE_HEADER: [&str; 5] = ["k", "stationarity", "lyapunov", "momentum_gap", "delta"];
pub const SUMMARY_HEADER: [&str; 5] = ["seed", "c", "final_f", "final_stationarity", "diverged"];

/// 17 significant digits, enough to read back the same `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Terminal numbers of one run; a row of `summary.csv` or `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub c: f64,
    pub final_f: f64,
    pub final_stationarity: f64,
    pub diverged: bool,
}

impl Summary {
    fn record(&self) -> [String; 5] {
        [
            self.seed.to_string(),
            fmt_real(self.c),
            fmt_real(self.final_f),
            fmt_real(self.final_stationarity),
            self.diverged.to_string(),
        ]
    }
}

fn write_table<W: Write, const N: usize>(
    out: W,
    header: [&str; N],
    rows: impl Iterator<Item = [String; N]>,
) -> Result<(), CliError> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_csv<W: Write>(out: W, rows: &[IterRow]) -> Result<(), CliError> {
    write_table(
        out,
        RUN_HEADER,
        rows.iter().map(|r| {
            [
                r.k.to_string(),
                fmt_real(r.f),
                fmt_real(r.m_norm),
                fmt_real(r.eta),
                fmt_real(r.theta),
            ]
        }),
    )
}

/// A missing momentum gap (no hull oracle) is an empty field.
pub fn write_probes_csv<W: Write>(out: W, probes: &[ProbeRow]) -> Result<(), CliError> {
    write_table(
        out,
        PROBE_HEADER,
        probes.iter().map(|p| {
            [
                p.k.to_string(),
                fmt_real(p.stationarity),
                fmt_real(p.lyapunov),
                p.momentum_gap.map(fmt_real).unwrap_or_default(),
                fmt_real(p.delta),
            ]
        }),
    )
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[Summary]) -> Result<(), CliError> {
    write_table(out, SUMMARY_HEADER, rows.iter().map(Summary::record))
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(std::io::BufWriter::new(f))
}
