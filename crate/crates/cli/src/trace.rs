//! Iteration-trace CSV files.

use std::fmt::Write as _;
use std::path::Path;

use tvcs::solvers::IterationTrace;

use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 7] = [
    "iter",
    "wall_seconds",
    "objective_tv",
    "objective_penalty",
    "constraint_residual",
    "rel_change",
    "rel_error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one row per iteration. Columns that do not apply to the solver
/// are left empty; `rel_error` is in percent.
pub fn write_trace(path: &Path, trace: &IterationTrace) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            r.wall_seconds.to_string(),
            r.objective_tv.to_string(),
            opt(r.objective_penalty),
            opt(r.constraint_residual),
            r.rel_change.to_string(),
            opt(r.rel_error),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub wall_seconds: f64,
    pub objective_tv: f64,
    pub objective_penalty: Option<f64>,
    pub constraint_residual: Option<f64>,
    pub rel_change: f64,
    pub rel_error: Option<f64>,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let bad = |reason: String| CliError::Trace {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => bad(format!("cannot open trace: {e}")),
        _ => bad(e.to_string()),
    })?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(bad(format!(
            "unexpected header `{}`, expected `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            TRACE_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let field = |k: usize| -> Result<Option<f64>> {
            let s = record.get(k).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| bad(format!("line {line}: `{}` is not a number: `{s}`", TRACE_HEADER[k])))
        };
        let required = |k: usize| -> Result<f64> {
            field(k)?.ok_or_else(|| bad(format!("line {line}: `{}` is empty", TRACE_HEADER[k])))
        };
        let iter = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {line}: bad iteration number")))?;
        rows.push(TraceRow {
            iter,
            wall_seconds: required(1)?,
            objective_tv: required(2)?,
            objective_penalty: field(3)?,
            constraint_residual: field(4)?,
            rel_change: required(5)?,
            rel_error: field(6)?,
        });
    }
    Ok(rows)
}

/// Row positions printed by [`print_trace_summary`]: the first row, every
/// tenth of the run and the last row.
pub fn summary_indices(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..=10).map(|k| k * (len - 1) / 10).collect();
    idx.dedup();
    idx
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

/// Formats the first, decile and last rows of a trace file.
pub fn print_trace_summary(path: &Path) -> Result<String> {
    let rows = read_trace(path)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>14} {:>14} {:>14} {:>12}",
        "iter", "seconds", "objective_tv", "penalty", "residual", "RE_percent"
    );
    for i in summary_indices(rows.len()) {
        let r = &rows[i];
        let _ = writeln!(
            out,
            "{:>8} {:>10.4} {:>14.6e} {:>14} {:>14} {:>12}",
            r.iter,
            r.wall_seconds,
            r.objective_tv,
            cell(r.objective_penalty),
            cell(r.constraint_residual),
            r.rel_error.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decile_positions() {
        assert_eq!(summary_indices(0), Vec::<usize>::new());
        assert_eq!(summary_indices(1), vec![0]);
        assert_eq!(summary_indices(3), vec![0, 1, 2]);
        let idx = summary_indices(101);
        assert_eq!(idx.len(), 11);
        assert_eq!((idx[0], idx[5], idx[10]), (0, 50, 100));
    }
}
