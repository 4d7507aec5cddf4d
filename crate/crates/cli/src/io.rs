//! Reading and writing recordings, plus atomic file output.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use spikeid_core::DataMatrix;

use crate::error::{CliError, Result};

pub const RAW_MAGIC: &[u8; 4] = b"SPKC";
pub const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// One row per channel, comma separated, optional header row.
    #[default]
    Csv,
    /// 16-byte header ("SPKC", u32 K, u32 T, u32 zero) then row-major f64, all little-endian.
    RawF64,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::RawF64 => "f64",
        }
    }
}

/// Shortest text that parses back to the same bits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn ingest(path: &Path, format: DataFormat, sample_period_ms: f64) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = match format {
        DataFormat::Csv => parse_csv(bytes.as_slice(), sample_period_ms),
        DataFormat::RawF64 => parse_raw(&bytes, sample_period_ms),
    };
    parsed.map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_csv<R: Read>(reader: R, sample_period_ms: f64) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("malformed CSV: {e}")))?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        // A first row with no numeric cell is a header.
        if idx == 0 && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::Data(format!("row {line}, column {}: non-numeric cell '{field}'", j + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "row {line}, column {}: non-finite value '{field}'",
                    j + 1
                )));
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::Data(format!(
                    "dimension mismatch: row {line} has {} columns, expected {w}",
                    row.len()
                )))
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok(DataMatrix::from_rows(&rows, sample_period_ms)?)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn parse_raw(bytes: &[u8], sample_period_ms: f64) -> Result<DataMatrix> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(CliError::Data(format!(
            "truncated header: {} of {RAW_HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(CliError::Data("missing SPKC magic".into()));
    }
    let k = read_u32(bytes, 4) as usize;
    let t = read_u32(bytes, 8) as usize;
    let reserved = read_u32(bytes, 12);
    if reserved != 0 {
        return Err(CliError::Data(format!("unsupported header: reserved field is {reserved}")));
    }
    let expected = k
        .checked_mul(t)
        .ok_or_else(|| CliError::Data(format!("header dimensions {k} x {t} overflow")))?;
    let body = &bytes[RAW_HEADER_LEN..];
    let found = body.len() / 8;
    if body.len() < expected * 8 {
        return Err(CliError::Data(format!(
            "truncated file: header declares K={k}, T={t}, expected {expected} values, found {found}"
        )));
    }
    if body.len() > expected * 8 {
        return Err(CliError::Data(format!(
            "{} trailing bytes after the {expected} declared values",
            body.len() - expected * 8
        )));
    }
    let mut rows = vec![Vec::with_capacity(t); k];
    for (n, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("eight bytes"));
        let (i, j) = (n / t, n % t);
        if !v.is_finite() {
            return Err(CliError::Data(format!("row {}, column {}: non-finite value {v}", i + 1, j + 1)));
        }
        rows[i].push(v);
    }
    Ok(DataMatrix::from_rows(&rows, sample_period_ms)?)
}

pub fn encode_csv(data: &DataMatrix) -> Vec<u8> {
    let mut out = String::new();
    for row in data.values().row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn encode_raw(data: &DataMatrix) -> Vec<u8> {
    let (k, t) = (data.n_channels(), data.n_samples());
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * k * t);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for row in data.values().row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn encode(data: &DataMatrix, format: DataFormat) -> Vec<u8> {
    match format {
        DataFormat::Csv => encode_csv(data),
        DataFormat::RawF64 => encode_raw(data),
    }
}

pub fn emit(path: &Path, data: &DataMatrix, format: DataFormat) -> Result<()> {
    if format == DataFormat::RawF64 && (data.n_channels() > u32::MAX as usize || data.n_samples() > u32::MAX as usize) {
        return Err(CliError::Config("recording too large for the raw-f64 header".into()));
    }
    write_atomic(path, &encode(data, format))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_examples() {
        let d = parse_csv("1,2,3\n4,5,6".as_bytes(), 1.0).unwrap();
        assert_eq!((d.n_channels(), d.n_samples()), (2, 3));
        assert_eq!(d.values()[(1, 2)], 6.0);
        let h = parse_csv("a,b,c\n1,2,3\n4,5,6\n".as_bytes(), 1.0).unwrap();
        assert_eq!(h.values(), d.values());
    }

    #[test]
    fn csv_errors_carry_positions() {
        let e = parse_csv("1,2,3\n4,x,6".as_bytes(), 1.0).unwrap_err().to_string();
        assert!(e.contains("row 2, column 2"), "{e}");
        let e = parse_csv("1,2,3\n4,5".as_bytes(), 1.0).unwrap_err().to_string();
        assert!(e.contains("row 2") && e.contains("expected 3"), "{e}");
        let e = parse_csv("1,2\n3,NaN".as_bytes(), 1.0).unwrap_err().to_string();
        assert!(e.contains("row 2, column 2"), "{e}");
    }

    #[test]
    fn raw_truncation_names_expected_count() {
        let mut bytes = Vec::from(&RAW_MAGIC[..]);
        for v in [2u32, 3, 0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..5 {
            bytes.extend_from_slice(&(i as f64).to_le_bytes());
        }
        let e = parse_raw(&bytes, 1.0).unwrap_err().to_string();
        assert!(e.contains("expected 6") && e.contains("found 5"), "{e}");
        bytes.extend_from_slice(&5f64.to_le_bytes());
        let d = parse_raw(&bytes, 1.0).unwrap();
        assert_eq!(d.values()[(1, 0)], 3.0);
        assert_eq!(encode_raw(&d), bytes);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, -0.0, 1.5, 1e-300, -2.5e20, 123456.789, 1e-4, 9.99e-5] {
            let back: f64 = format_number(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x}");
        }
    }
}
