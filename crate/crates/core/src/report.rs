//! Dataset bundles and the JSON report emitted by the command-line tool.
//!
//! Reports serialize every float with 17 significant digits and omit
//! wall-clock timings unless asked for, so identical inputs and seeds give
//! byte-identical files.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineReport;
use crate::error::{FldError, Result};
use crate::io::{decode_csv, decode_fvec, FeatureFormat};
use crate::metrics::{CalibrationConstant, FldResult, SampleRanking};
use crate::mog::FitConfig;
use crate::tensor::{FeatureMatrix, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub role: Role,
    pub path: String,
    pub format: FeatureFormat,
    /// Hex SHA-256 of the file bytes.
    pub sha256: String,
    pub rows: usize,
    pub dim: usize,
}

/// Train, test and generated features loaded together.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub gen: FeatureMatrix,
    pub manifest: Vec<SourceEntry>,
}

/// Read one feature file and describe it for the manifest.
pub fn load_source(path: &Path, role: Role) -> Result<(FeatureMatrix, SourceEntry)> {
    let bytes = std::fs::read(path).map_err(|source| FldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format = FeatureFormat::from_path(path);
    let matrix = match format {
        FeatureFormat::Fvec => decode_fvec(&bytes, role),
        FeatureFormat::Csv => decode_csv(&bytes, role),
    }
    .map_err(|e| match e {
        FldError::Format { location, detail } => FldError::Format {
            location: format!("{}: {location}", path.display()),
            detail,
        },
        other => other,
    })?;
    let entry = SourceEntry {
        role,
        path: path.display().to_string(),
        format,
        sha256: hex(&Sha256::digest(&bytes)),
        rows: matrix.rows(),
        dim: matrix.dim(),
    };
    Ok((matrix, entry))
}

impl DatasetBundle {
    pub fn load(train: &Path, test: &Path, gen: &Path) -> Result<Self> {
        let (train, e_train) = load_source(train, Role::Train)?;
        let (test, e_test) = load_source(test, Role::Test)?;
        let (gen, e_gen) = load_source(gen, Role::Generated)?;
        train.ensure_same_dim(&test)?;
        train.ensure_same_dim(&gen)?;
        Ok(Self {
            train,
            test,
            gen,
            manifest: vec![e_train, e_test, e_gen],
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to rerun a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub tool_version: String,
    pub seed: u64,
    pub standardize: bool,
    pub fit: FitConfig,
    pub calibration_seed: Option<u64>,
    pub pr_k: Option<usize>,
    pub threshold_seed: Option<u64>,
    pub threshold_percentile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Per-sample rankings attached to a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankingPair {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memorization: Option<SampleRanking>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<SampleRanking>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub inputs: Vec<SourceEntry>,
    pub config: ConfigEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConstant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fld: Option<FldResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overfitting: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BaselineReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<RankingPair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        to_json_sig17(self)
    }
}

/// Pretty JSON where every float carries 17 significant digits.
pub fn to_json_sig17<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| FldError::format("json", e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Default)]
struct Sig17Formatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Path helper for reports: `None` means stdout.
pub fn write_output(path: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| FldError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => io::stdout().write_all(bytes).map_err(|source| FldError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Probe {
        a: f64,
        b: Vec<f64>,
        c: u32,
        nan: f64,
    }

    #[test]
    fn floats_have_17_significant_digits() {
        let json = to_json_sig17(&Probe {
            a: 0.1,
            b: vec![1.0, -2.5e-8],
            c: 3,
            nan: f64::NAN,
        })
        .unwrap();
        let text = String::from_utf8(json).unwrap();
        assert!(text.contains("\"a\": 1.0000000000000001e-1"));
        assert!(text.contains(&format!("{:.16e}", -2.5e-8)));
        assert!(text.contains("1.0000000000000000e0"));
        assert!(text.contains("\"c\": 3"));
        assert!(text.contains("\"nan\": null"));
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn sha256_hex() {
        assert_eq!(
            hex(&Sha256::digest(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
