//! Text formats: histograms, grids, scan curves and key-value reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;
use twinbeam::model::{Histogram2D, QdiiGrid};

use crate::error::{CliError, Result};

/// Output format of reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, column: usize, reason: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        reason: reason.into(),
    }
}

/// Parses a histogram file: a `# frames: <n>` line, then comma-separated
/// rows indexed by `m_s`. Further `#` lines are comments; short rows are
/// padded with zeros.
pub fn parse_histogram(path: &Path, text: &str) -> Result<Histogram2D> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (first_no, first) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| parse_error(path, 1, 1, "empty histogram file"))?;
    let frames = first
        .strip_prefix('#')
        .and_then(|rest| rest.trim().strip_prefix("frames:"))
        .ok_or_else(|| parse_error(path, first_no, 1, "expected a '# frames: <integer>' header"))?
        .trim();
    let frames: u64 = frames
        .parse()
        .map_err(|_| parse_error(path, first_no, 1, format!("frame count {frames:?} is not an integer")))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (k, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, no, k + 1, format!("{cell:?} is not a number")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(parse_error(path, no, k + 1, format!("cell {v} must be finite and non-negative")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, first_no + 1, 1, "histogram has no rows"));
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut counts = Array2::zeros((rows.len(), cols));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            counts[[r, c]] = v;
        }
    }
    Ok(Histogram2D::new(counts, frames as f64)?)
}

pub fn read_histogram(path: &Path) -> Result<Histogram2D> {
    parse_histogram(path, &read_text(path)?)
}

/// Histogram file body; `comments` are written as `#` lines after the
/// frame header.
pub fn format_histogram(h: &Histogram2D, comments: &[String]) -> String {
    let mut out = format!("# frames: {}\n", h.total_frames());
    for c in comments {
        writeln!(out, "# {c}").unwrap();
    }
    for row in h.counts().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Grid file: `# ws:` and `# wi:` axis lines, then one row per `W_s`.
pub fn format_grid(g: &QdiiGrid) -> String {
    let mut out = format!("# ordering: {}\n# ws: {}\n# wi: {}\n", g.ordering(), join(g.w_s_axis()), join(g.w_i_axis()));
    for row in g.values().rows() {
        writeln!(out, "{}", join(&row.to_vec())).unwrap();
    }
    out
}

pub fn format_scan(scan: &[(f64, f64)]) -> String {
    let mut out = String::from("var_p,declination\n");
    for (v, d) in scan {
        writeln!(out, "{v},{d}").unwrap();
    }
    out
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            let cells: Vec<String> = items.iter().map(scalar).collect();
            out.push((prefix.to_string(), cells.join(";")));
        }
        Value::Array(items) => {
            for (k, v) in items.iter().enumerate() {
                flatten(&key(&k.to_string()), v, out);
            }
        }
        _ => out.push((prefix.to_string(), scalar(v))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Report body in the requested format. CSV reports are `key,value` lines
/// with nested keys joined by dots and lists joined by semicolons.
pub fn format_report<T: Serialize>(report: &T, format: Format) -> String {
    let value = serde_json::to_value(report).expect("reports serialize");
    match format {
        Format::Json => serde_json::to_string_pretty(&value).expect("reports serialize") + "\n",
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            let mut out = String::from("key,value\n");
            for (k, v) in rows {
                writeln!(out, "{k},{v}").unwrap();
            }
            out
        }
    }
}

pub fn report_path(dir: &Path, stem: &str, format: Format) -> PathBuf {
    dir.join(match format {
        Format::Json => format!("{stem}.json"),
        Format::Csv => format!("{stem}.csv"),
    })
}
