//! CSV writers and the run manifest.
//!
//! Every command writes its tables as comma-separated UTF-8 with a header
//! row and LF line endings; floating-point values carry 12 significant
//! digits. A run manifest (JSON) records the command line, config digest,
//! seed, tool version, timestamps and the produced files; output file
//! names embed the same run identifier so each CSV can be traced back to
//! the manifest that produced it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{PleCurve, RecoveryCurve, Spectrum, TraceRecord};
use crate::oracle::ValidationReport;
use crate::relaxation::RatePoint;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// 12-significant-digit float serialization used in every CSV.
pub fn fmt_float(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if value.is_nan() {
        return "nan".to_string();
    }
    format!("{value:.11e}")
}

/// Provenance record shared by all outputs of one invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Deterministic identifier: SHA-256 over (command line, seed, config
    /// digest), truncated
    pub run_id: String,
    pub command_line: Vec<String>,
    /// SHA-256 of the material/protocol config actually used
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// The run id hashes only reproducible inputs, so identical
    /// invocations produce identically named outputs.
    pub fn new(command_line: Vec<String>, config_text: &str, seed: u64) -> Self {
        let config_digest = hex_digest(config_text.as_bytes());
        let mut hasher = Sha256::new();
        for arg in &command_line {
            hasher.update(arg.as_bytes());
            hasher.update([0]);
        }
        hasher.update(seed.to_le_bytes());
        hasher.update(config_digest.as_bytes());
        let run_id = hex::encode(&hasher.finalize()[..6]);
        Self {
            run_id,
            command_line,
            config_digest,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
            outputs: Vec::new(),
        }
    }

    /// File name carrying this run's identifier.
    pub fn file_name(&self, stem: &str, ext: &str) -> String {
        format!("{stem}_{}.{ext}", self.run_id)
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs
            .push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }

    pub fn write(&mut self, dir: &Path) -> Result<PathBuf, OutputError> {
        self.finished_unix_s = unix_now();
        let path = dir.join(self.file_name("manifest", "json"));
        let text = serde_json::to_string_pretty(self)?;
        write_text(&path, &text)?;
        Ok(path)
    }
}

mod hex {
    pub fn encode(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(&hasher.finalize())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut file = File::create(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn writer(path: &Path) -> Result<BufWriter<File>, OutputError> {
    Ok(BufWriter::new(File::create(path).map_err(|source| {
        OutputError::Io {
            path: path.to_path_buf(),
            source,
        }
    })?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), OutputError> {
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Field-sweep CSV: B_T, geometry, delta1_eV, delta2_eV, gamma_s1, n_ph,
/// T1_s.
pub fn write_sweep_csv(path: &Path, points: &[RatePoint]) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "B_T,geometry,delta1_eV,delta2_eV,gamma_s1,n_ph,T1_s").map_err(io_err)?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_float(p.b_field),
            p.geometry,
            fmt_float(p.delta1),
            fmt_float(p.delta2),
            fmt_float(p.gamma_down_up),
            fmt_float(p.n_ph),
            fmt_float(p.t1),
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Oracle validation CSV: B_T, geometry, gamma_oracle_s1,
/// gamma_analytic_s1, rel_err.
pub fn write_oracle_csv(path: &Path, reports: &[&ValidationReport]) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "B_T,geometry,gamma_oracle_s1,gamma_analytic_s1,rel_err").map_err(io_err)?;
    for report in reports {
        for p in &report.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_float(p.b_field),
                p.geometry,
                fmt_float(p.gamma_oracle),
                fmt_float(p.gamma_analytic),
                fmt_float(p.rel_err),
            )
            .map_err(io_err)?;
        }
    }
    finish(w, path)
}

/// Trace CSV: time_s, expected_counts, sampled_counts, err_counts.
pub fn write_trace_csv(path: &Path, trace: &TraceRecord) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "time_s,expected_counts,sampled_counts,err_counts").map_err(io_err)?;
    for i in 0..trace.bin_start_s.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_float(trace.bin_start_s[i]),
            fmt_float(trace.expected_counts[i]),
            trace.sampled_counts[i],
            fmt_float(trace.expected_counts[i].sqrt()),
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Recovery-curve CSV: tau_s, expected_counts, sampled_counts, err_counts.
pub fn write_recovery_csv(path: &Path, curve: &RecoveryCurve) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "tau_s,expected_counts,sampled_counts,err_counts").map_err(io_err)?;
    for i in 0..curve.tau_s.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_float(curve.tau_s[i]),
            fmt_float(curve.expected_counts[i]),
            curve.sampled_counts[i],
            fmt_float(curve.err_counts[i]),
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// Spectrum CSV: energy_eV, intensity.
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "energy_eV,intensity").map_err(io_err)?;
    for (e, i) in spectrum.energy_ev.iter().zip(&spectrum.intensity) {
        writeln!(w, "{},{}", fmt_float(*e), fmt_float(*i)).map_err(io_err)?;
    }
    finish(w, path)
}

/// Line-position CSV for a spectrum: label, energy_eV, weight (includes
/// the static satellite-band annotations).
pub fn write_lines_csv(path: &Path, spectrum: &Spectrum) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "label,energy_eV,weight").map_err(io_err)?;
    for line in spectrum.lines.iter().chain(&spectrum.satellite_labels) {
        writeln!(
            w,
            "{},{},{}",
            line.label,
            fmt_float(line.energy_ev),
            fmt_float(line.weight)
        )
        .map_err(io_err)?;
    }
    finish(w, path)
}

/// PLE CSV: energy_eV, flux.
pub fn write_ple_csv(path: &Path, curve: &PleCurve) -> Result<(), OutputError> {
    let mut w = writer(path)?;
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "energy_eV,flux").map_err(io_err)?;
    for (e, f) in curve.energy_ev.iter().zip(&curve.flux) {
        writeln!(w, "{},{}", fmt_float(*e), fmt_float(*f)).map_err(io_err)?;
    }
    finish(w, path)
}
