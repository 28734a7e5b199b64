//! CSV and JSON helpers shared by the command-line front end.
//!
//! Floats are written with 17 significant digits so that re-parsing a file
//! reproduces every value bitwise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::IterateSet;
use crate::ssm::ObservationSeries;

/// Round-trippable decimal form of `v`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// `theta1,theta2,…` column names.
pub fn theta_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("theta{i}")).collect()
}

/// Writes a header and rows of already formatted cells.
pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!(
            "{}: line {line}: `{cell}` is not a number",
            path.display()
        ))
    })
}

/// Reads the `y` column of a CSV file (or its only column, if there is one).
pub fn read_observations(path: &Path) -> Result<ObservationSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = match headers.iter().position(|h| h.trim() == "y") {
        Some(i) => i,
        None if headers.len() == 1 => 0,
        None => {
            return Err(Error::InvalidInput(format!(
                "{}: no `y` column",
                path.display()
            )))
        }
    };
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(col).ok_or_else(|| {
            Error::InvalidInput(format!("{}: short row {}", path.display(), i + 2))
        })?;
        y.push(parse_cell(cell, path, i + 2)?);
    }
    ObservationSeries::new(y)
}

/// Reads `theta*` and `loglik_hat` columns from an iterate trace.
pub fn read_iterates(path: &Path) -> Result<IterateSet> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let theta_cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("theta"))
        .map(|(i, _)| i)
        .collect();
    let value_col = headers.iter().position(|h| h.trim() == "loglik_hat");
    let (Some(value_col), false) = (value_col, theta_cols.is_empty()) else {
        return Err(Error::InvalidInput(format!(
            "{}: need theta and loglik_hat columns",
            path.display()
        )));
    };
    let mut set = IterateSet::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let get = |c: usize| -> Result<f64> {
            let cell = rec.get(c).ok_or_else(|| {
                Error::InvalidInput(format!("{}: short row {}", path.display(), i + 2))
            })?;
            parse_cell(cell, path, i + 2)
        };
        let theta = theta_cols
            .iter()
            .map(|&c| get(c))
            .collect::<Result<Vec<_>>>()?;
        set.push(theta, get(value_col)?)?;
    }
    Ok(set)
}
