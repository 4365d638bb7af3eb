//! File formats: CSV traces and samples, JSON reports, run manifests.
//!
//! Numbers are written in Rust's shortest round-trip form, so every artifact
//! is byte-identical across reruns with the same inputs.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use fracsource_core::laplace::LaplaceSamples;
use fracsource_core::{FluxTrace, ReconstructionResult, SpectrumTable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Write `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest round-trip decimal.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Header plus rows of numbers.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(num).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Parse a numeric CSV with a header line; returns the header and the rows.
pub fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 2)))?;
        if row.len() != header.len() {
            return Err(CliError::Validation(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                i + 2,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub const TRACE_HEADER: [&str; 2] = ["t", "flux"];

pub fn trace_csv(trace: &FluxTrace) -> String {
    csv(
        &TRACE_HEADER,
        trace.times.iter().zip(&trace.values).map(|(t, v)| vec![*t, *v]),
    )
}

/// Read a `t,flux` file as a trace at `sensor_angle`.
pub fn read_trace(path: &Path, sensor_angle: f64) -> Result<FluxTrace, CliError> {
    let (header, rows) = parse_csv(path)?;
    if header != TRACE_HEADER {
        return Err(CliError::Validation(format!(
            "{}: header must be {:?}",
            path.display(),
            TRACE_HEADER.join(",")
        )));
    }
    let times = rows.iter().map(|r| r[0]).collect();
    let values = rows.iter().map(|r| r[1]).collect();
    FluxTrace::new(sensor_angle, times, values)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn laplace_csv(samples: &LaplaceSamples) -> String {
    csv(
        &["re_s", "im_s", "re_G", "im_G"],
        samples
            .points
            .iter()
            .zip(&samples.values)
            .map(|(p, g)| vec![p.s().re, p.s().im, g.re, g.im]),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub lambda_max: f64,
    pub modes: Vec<ModeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeJson {
    pub m: i32,
    pub k: u32,
    pub lambda: f64,
    pub omega: f64,
}

impl SpectrumJson {
    pub fn new(spectrum: &SpectrumTable) -> Self {
        Self {
            lambda_max: spectrum.lambda_max(),
            modes: spectrum
                .modes()
                .iter()
                .map(|m| ModeJson { m: m.m, k: m.k, lambda: m.lambda, omega: m.omega })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionJson {
    pub alpha_hat: f64,
    pub cuts_hat: Vec<f64>,
    #[serde(rename = "K_hat")]
    pub k_hat: usize,
    pub coeffs: Vec<CoeffJson>,
    pub residual_norm: f64,
    pub condition_report: Vec<ConditionJson>,
    pub stage_log: Vec<StageJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffJson {
    pub m: i32,
    pub k: u32,
    pub lambda: f64,
    /// 1-based piece index.
    pub piece: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionJson {
    pub abs_m: u32,
    pub determinant_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageJson {
    pub stage: String,
    pub diagnostics: Vec<DiagnosticJson>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticJson {
    pub name: String,
    pub value: f64,
}

impl ReconstructionJson {
    pub fn new(result: &ReconstructionResult, spectrum: &SpectrumTable) -> Self {
        let mut coeffs = Vec::new();
        for (k, piece) in result.coeffs_hat.iter().enumerate() {
            for (mode, v) in spectrum.modes().iter().zip(&piece.values) {
                coeffs.push(CoeffJson {
                    m: mode.m,
                    k: mode.k,
                    lambda: mode.lambda,
                    piece: k + 1,
                    re: v.re,
                    im: v.im,
                });
            }
        }
        Self {
            alpha_hat: result.alpha_hat,
            cuts_hat: result.cuts_hat.clone(),
            k_hat: result.k_hat,
            coeffs,
            residual_norm: result.residual_norm,
            condition_report: result
                .condition_report
                .iter()
                .map(|(m, d)| ConditionJson { abs_m: *m, determinant_modulus: *d })
                .collect(),
            stage_log: result
                .stage_log
                .iter()
                .map(|s| StageJson {
                    stage: s.stage.clone(),
                    diagnostics: s
                        .diagnostics
                        .iter()
                        .map(|(n, v)| DiagnosticJson { name: n.clone(), value: *v })
                        .collect(),
                    warnings: s.warnings.clone(),
                })
                .collect(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    /// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` when set.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<u64>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Artifacts of one command, written together with their manifest.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents.into_bytes()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Write every file atomically into `dir`, then `manifest_<command>.json`.
    pub fn write(
        self,
        dir: &Path,
        command: &str,
        config_sha256: &str,
        seed: u64,
    ) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, bytes)?;
            entries.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
            written.push(path);
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
            files: entries,
        };
        let path = dir.join(format!("manifest_{command}.json"));
        write_atomic(&path, to_json(&manifest).as_bytes())?;
        written.push(path);
        Ok(written)
    }
}
