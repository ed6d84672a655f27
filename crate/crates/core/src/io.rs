//! Feature-file formats.
//!
//! FVEC layout, all integers little-endian:
//!
//! | offset | size  | field                          |
//! |--------|-------|--------------------------------|
//! | 0      | 4     | magic `b"FLD1"`                |
//! | 4      | 4     | `n` rows, `u32`                |
//! | 8      | 4     | `d` columns, `u32`             |
//! | 12     | 1     | dtype, `0` = `f32`             |
//! | 13     | 4·n·d | row-major `f32` values         |
//!
//! CSV files hold one row per line, `.` as decimal separator. A first
//! column that does not parse as a number is read as the row id, and a
//! first line with no numeric field at all is skipped as a header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FldError, Result};
use crate::metrics::SampleRanking;
use crate::synth::ExperimentTable;
use crate::tensor::{FeatureMatrix, Role};

pub const FVEC_MAGIC: &[u8; 4] = b"FLD1";
pub const FVEC_HEADER_LEN: usize = 13;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    Fvec,
    Csv,
}

impl FeatureFormat {
    /// `.csv` maps to CSV, anything else to FVEC.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FeatureFormat::Csv,
            _ => FeatureFormat::Fvec,
        }
    }
}

impl FromStr for FeatureFormat {
    type Err = FldError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvec" => Ok(FeatureFormat::Fvec),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(FldError::config(format!("unknown feature format {other:?}"))),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FldError {
    FldError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_features(path: &Path, format: FeatureFormat, role: Role) -> Result<FeatureMatrix> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    match format {
        FeatureFormat::Fvec => decode_fvec(&bytes, role),
        FeatureFormat::Csv => decode_csv(&bytes, role),
    }
}

pub fn write_features(matrix: &FeatureMatrix, path: &Path, format: FeatureFormat) -> Result<()> {
    let bytes = match format {
        FeatureFormat::Fvec => encode_fvec(matrix)?,
        FeatureFormat::Csv => encode_csv(matrix)?,
    };
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

pub fn encode_fvec(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let n = u32::try_from(matrix.rows())
        .map_err(|_| FldError::format("header", "row count exceeds u32"))?;
    let d = u32::try_from(matrix.dim())
        .map_err(|_| FldError::format("header", "column count exceeds u32"))?;
    let mut out = Vec::with_capacity(FVEC_HEADER_LEN + 4 * matrix.as_slice().len());
    out.extend_from_slice(FVEC_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.push(DTYPE_F32);
    for &v in matrix.as_slice() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(FldError::format(
                "payload",
                format!("value {v} does not fit in a 32-bit float"),
            ));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fvec(bytes: &[u8], role: Role) -> Result<FeatureMatrix> {
    let at = |offset: usize| format!("byte offset {offset}");
    if bytes.len() < FVEC_HEADER_LEN {
        return Err(FldError::format(
            at(bytes.len()),
            format!("header needs {FVEC_HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != FVEC_MAGIC {
        return Err(FldError::format(at(0), "bad magic, expected \"FLD1\""));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n, d, dtype) = (u32_at(4), u32_at(8), bytes[12]);
    if dtype != DTYPE_F32 {
        return Err(FldError::format(at(12), format!("unsupported dtype {dtype}")));
    }
    if n == 0 || d == 0 {
        return Err(FldError::format(at(4), format!("empty matrix {n}x{d}")));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(FVEC_HEADER_LEN))
        .ok_or_else(|| FldError::format(at(4), "declared size overflows"))?;
    if bytes.len() < expected {
        return Err(FldError::format(
            at(bytes.len()),
            format!("truncated payload: header declares {n}x{d}, needs {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(FldError::format(at(expected), "trailing bytes after payload"));
    }
    let data: Vec<f64> = bytes[FVEC_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(FldError::format(
            at(FVEC_HEADER_LEN + 4 * k),
            "non-finite value",
        ));
    }
    FeatureMatrix::new(data, n, d, role)
}

pub fn encode_csv(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let mut record = Vec::with_capacity(matrix.dim() + 1);
    for (i, row) in matrix.iter_rows().enumerate() {
        record.clear();
        if let Some(ids) = matrix.ids() {
            record.push(ids[i].clone());
        }
        record.extend(row.iter().map(|v| format_f64(*v)));
        w.write_record(&record)
            .map_err(|e| FldError::format(format!("row {i}"), e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| FldError::format("csv", e.to_string()))
}

pub fn decode_csv(bytes: &[u8], role: Role) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut data = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut has_ids: Option<bool> = None;
    let mut d: Option<usize> = None;
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| FldError::format(format!("line {line}"), e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if rows == 0 && has_ids.is_none() && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue; // header
        }
        let first_is_id = record.get(0).is_some_and(|f| f.parse::<f64>().is_err());
        let with_ids = *has_ids.get_or_insert(first_is_id);
        let skip = usize::from(with_ids);
        let width = record.len() - skip;
        if width == 0 {
            return Err(FldError::format(format!("line {line}"), "row has no values"));
        }
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(FldError::format(
                    format!("line {line}"),
                    format!("ragged row: {width} values, expected {w}"),
                ))
            }
            _ => {}
        }
        if with_ids {
            ids.push(record[0].to_string());
        }
        for (c, field) in record.iter().skip(skip).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                FldError::format(
                    format!("line {line}"),
                    format!("column {} is not a number: {field:?}", c + skip + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(FldError::format(format!("line {line}"), "non-finite value"));
            }
            data.push(v);
        }
        rows += 1;
    }
    let d = d.ok_or_else(|| FldError::format("line 1", "no data rows"))?;
    let m = FeatureMatrix::new(data, rows, d, role)?;
    if has_ids == Some(true) {
        m.with_ids(ids)
    } else {
        Ok(m)
    }
}

/// Shortest representation that round-trips exactly.
fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Floats written with 17 significant digits; non-finite values as `NaN`/`inf`.
pub fn format_sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn experiment_csv(table: &ExperimentTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| FldError::format("csv", e.to_string());
    w.write_record([
        table.kind.knob_name(),
        "fld_test",
        "fld_train",
        "gen_gap",
        "fid_train",
        "fid_test",
        "fid_gap",
        "precision",
        "recall",
        "c_t",
        "auth_pct",
    ])
    .map_err(err)?;
    for r in &table.rows {
        let vals = [
            r.knob, r.fld_test, r.fld_train, r.gen_gap, r.fid_train, r.fid_test, r.fid_gap,
            r.precision, r.recall, r.c_t, r.auth_pct,
        ];
        w.write_record(vals.iter().map(|v| format_sig17(*v))).map_err(err)?;
    }
    w.into_inner().map_err(|e| FldError::format("csv", e.to_string()))
}

/// `id,log_score,rank` for the `top` highest-scoring samples (all when `None`).
pub fn ranking_csv(ranking: &SampleRanking, gen: &FeatureMatrix, top: Option<usize>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| FldError::format("csv", e.to_string());
    let flagged = ranking.flagged.is_some();
    if flagged {
        w.write_record(["id", "log_score", "rank", "flagged"]).map_err(err)?;
    } else {
        w.write_record(["id", "log_score", "rank"]).map_err(err)?;
    }
    let count = top.unwrap_or(ranking.order.len()).min(ranking.order.len());
    for (pos, &j) in ranking.order.iter().take(count).enumerate() {
        let mut rec = vec![gen.id(j), format_sig17(ranking.scores[j]), (pos + 1).to_string()];
        if let Some(f) = &ranking.flagged {
            rec.push(f[j].to_string());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| FldError::format("csv", e.to_string()))
}
