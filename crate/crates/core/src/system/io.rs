//! CSV matrices for netload mean and standard deviation.
//!
//! Layout: a header row whose first cell is a label and whose remaining cells
//! are the period indices `0..T`, then one row per node starting with the
//! node index `0..N`. Values are MWh.

use std::fmt::Write as _;

use crate::csvfmt::f6;
use crate::{Error, Result};

fn parse_index(field: &str, expected: usize, what: &str) -> Result<()> {
    let got: usize = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what} index {field:?} is not an integer")))?;
    if got != expected {
        return Err(Error::Parse(format!("{what} index {got} found where {expected} expected")));
    }
    Ok(())
}

/// Parses a node × period matrix.
pub fn read_matrix_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(Error::Parse("header needs a label and at least one period".into()));
    }
    for (t, field) in header.iter().skip(1).enumerate() {
        parse_index(field, t, "period")?;
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        parse_index(&rec[0], n, "node")?;
        let row = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {f:?} in node row {n}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix has no node rows".into()));
    }
    Ok(rows)
}

pub fn write_matrix_csv(rows: &[Vec<f64>]) -> String {
    let periods = rows.first().map_or(0, Vec::len);
    let mut out = String::from("node");
    for t in 0..periods {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (n, row) in rows.iter().enumerate() {
        let _ = write!(out, "{n}");
        for v in row {
            let _ = write!(out, ",{}", f6(*v));
        }
        out.push('\n');
    }
    out
}
