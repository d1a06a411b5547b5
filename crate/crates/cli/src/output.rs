//! On-disk formats: the branch table, solution snapshots and run summary.
//!
//! The branch table is comma-separated with `#` comment lines carrying the
//! schema version and configuration hash. Snapshots and the summary are JSON
//! objects tagged with `schema_version`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use interwave::continuation::BranchPoint;
use interwave::{CollocationGrid, EvenField, WaveState};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const TABLE_COLUMNS: [&str; 11] = [
    "step",
    "eps",
    "c",
    "eta_sup",
    "eta_h3",
    "eta_at_zero",
    "min_vortex_distance",
    "det_sign",
    "sigma_min",
    "newton_iterations",
    "residual_norm",
];

/// Append-only branch table, flushed after every row.
pub struct BranchTable {
    out: BufWriter<File>,
}

impl BranchTable {
    pub fn create(path: &Path, config_hash: &str, mode: &str, direction: &str) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# interwave branch table")?;
        writeln!(out, "# schema_version = {SCHEMA_VERSION}")?;
        writeln!(out, "# config_sha256 = {config_hash}")?;
        writeln!(out, "# mode = {mode}")?;
        writeln!(out, "# direction = {direction}")?;
        writeln!(out, "{}", TABLE_COLUMNS.join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, step: usize, p: &BranchPoint) -> io::Result<()> {
        let d = &p.diagnostics;
        writeln!(
            self.out,
            "{step},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{},{:e}",
            p.eps,
            p.state.c,
            d.eta_sup,
            d.eta_sobolev,
            d.eta_at_zero,
            d.min_vortex_distance,
            d.det_sign,
            d.sigma_min,
            d.newton_iterations,
            d.residual_norm,
        )?;
        self.out.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub n_modes: usize,
    pub n_coeffs: usize,
    pub half_period: f64,
    pub vertical: usize,
    /// Fields are cosine series `sum_k a_k cos(k pi x / L)`.
    pub basis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub step: usize,
    pub eps: f64,
    pub c: f64,
    pub grid: GridMeta,
    pub eta: Vec<f64>,
    pub xi_bar: Vec<f64>,
    pub xi: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub det_sign: i8,
    pub sigma_min: f64,
    pub config_sha256: String,
}

impl Snapshot {
    pub fn new(step: usize, p: &BranchPoint, grid: &CollocationGrid, vertical: usize, hash: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            step,
            eps: p.eps,
            c: p.state.c,
            grid: GridMeta {
                n_modes: grid.n_modes(),
                n_coeffs: grid.n_coeffs(),
                half_period: grid.half_period(),
                vertical,
                basis: "cosine".into(),
            },
            eta: p.state.eta.coeffs().to_vec(),
            xi_bar: p.state.xi_bar.coeffs().to_vec(),
            xi: p.state.xi.coeffs().to_vec(),
            residual_norm: p.diagnostics.residual_norm,
            newton_iterations: p.diagnostics.newton_iterations,
            det_sign: p.diagnostics.det_sign,
            sigma_min: p.diagnostics.sigma_min,
            config_sha256: hash.to_string(),
        }
    }

    pub fn state(&self) -> WaveState {
        WaveState {
            eta: EvenField::from_coeffs(self.eta.clone()),
            xi_bar: EvenField::from_coeffs(self.xi_bar.clone()),
            xi: EvenField::from_coeffs(self.xi.clone()),
            c: self.c,
        }
    }

    pub fn file_name(step: usize) -> String {
        format!("point_{step:04}.json")
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(Self::file_name(self.step));
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let snap: Self = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if snap.schema_version != SCHEMA_VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported snapshot schema {}", snap.schema_version),
            ));
        }
        Ok(snap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: String,
    pub direction: String,
    pub termination: Option<String>,
    pub exit_code: i32,
    pub message: String,
    pub points: usize,
    pub det_sign_changes: Vec<usize>,
    pub last_eps: Option<f64>,
    pub config_sha256: String,
    pub config: String,
}

impl Summary {
    pub fn load(path: &Path) -> io::Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::other)?;
    writeln!(out)?;
    out.flush()
}
