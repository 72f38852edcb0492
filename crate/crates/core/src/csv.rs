//! Plain-text tables.
//!
//! * matrices: `i,j,value`, one row per `i < j`, row-major
//! * shell profiles: `k,D_k`, starting with the root row `0,1`
//! * dimension curves: `log10_p,d,L,log_prob`
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces the values bit for bit.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::dimension::DimensionCurvePoint;
use crate::profile::ShellProfile;
use crate::relational::RelationalMatrix;

pub const MATRIX_HEADER: &str = "i,j,value";
pub const PROFILE_HEADER: &str = "k,D_k";
pub const CURVE_HEADER: &str = "log10_p,d,L,log_prob";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

pub fn write_matrix<W: Write>(b: &RelationalMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "{MATRIX_HEADER}")?;
    for (i, j, v) in b.upper_entries() {
        writeln!(out, "{i},{j},{v}")?;
    }
    Ok(())
}

fn rows<R: BufRead>(input: R, header: &'static str) -> Result<Vec<(usize, Vec<String>)>, CsvError> {
    let mut lines = input.lines().enumerate();
    let found = match lines.next() {
        Some((_, line)) => line?,
        None => String::new(),
    };
    if found.trim() != header {
        return Err(CsvError::Header { expected: header, found });
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != width {
            return Err(CsvError::Row {
                line: idx + 1,
                reason: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        out.push((idx + 1, fields));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(line: usize, field: &str) -> Result<T, CsvError> {
    field.parse().map_err(|_| CsvError::Row {
        line,
        reason: format!("cannot parse `{field}`"),
    })
}

/// Reads a matrix written by [`write_matrix`]. The node count is taken from
/// the largest index present.
pub fn read_matrix<R: BufRead>(input: R) -> Result<RelationalMatrix, CsvError> {
    let mut entries = Vec::new();
    let mut n = 0;
    for (line, fields) in rows(input, MATRIX_HEADER)? {
        let i: usize = parse(line, &fields[0])?;
        let j: usize = parse(line, &fields[1])?;
        let v: f64 = parse(line, &fields[2])?;
        if i >= j {
            return Err(CsvError::Row {
                line,
                reason: format!("expected i < j, found {i},{j}"),
            });
        }
        n = n.max(j + 1);
        entries.push((i, j, v));
    }
    let mut dense = nalgebra::DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        dense[(i, j)] = v;
        dense[(j, i)] = -v;
    }
    RelationalMatrix::from_dmatrix(dense).map_err(|e| CsvError::Row {
        line: 0,
        reason: e.to_string(),
    })
}

pub fn write_profile<W: Write>(profile: &ShellProfile, mut out: W) -> io::Result<()> {
    writeln!(out, "{PROFILE_HEADER}")?;
    writeln!(out, "0,1")?;
    for (k, d) in profile.shells().iter().enumerate() {
        writeln!(out, "{},{d}", k + 1)?;
    }
    Ok(())
}

/// Reads `k,D_k` rows. Rows must be consecutive from `k = 0` (or `k = 1`);
/// the root row, when present, must read `0,1`.
pub fn read_profile<R: BufRead>(input: R) -> Result<ShellProfile, CsvError> {
    let mut shells = Vec::new();
    let mut expected_k = None;
    for (line, fields) in rows(input, PROFILE_HEADER)? {
        let k: usize = parse(line, &fields[0])?;
        let d: u64 = parse(line, &fields[1])?;
        let want = *expected_k.get_or_insert(if k == 0 { 0 } else { 1 });
        if k != want {
            return Err(CsvError::Row {
                line,
                reason: format!("expected k = {want}, found {k}"),
            });
        }
        if k == 0 {
            if d != 1 {
                return Err(CsvError::Row {
                    line,
                    reason: format!("root shell must be 1, found {d}"),
                });
            }
        } else {
            shells.push(d);
        }
        expected_k = Some(want + 1);
    }
    ShellProfile::new(shells).map_err(|e| CsvError::Row {
        line: 0,
        reason: e.to_string(),
    })
}

pub fn write_curve<W: Write>(points: &[DimensionCurvePoint], mut out: W) -> io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for point in points {
        writeln!(out, "{},{},{},{}", point.p.log10(), point.d, point.depth, point.log_prob)?;
    }
    Ok(())
}
