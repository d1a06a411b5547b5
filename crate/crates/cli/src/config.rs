//! TOML run configuration with four flat sections: `physical`,
//! `discretization`, `continuation` and `output`. Missing keys take the
//! desk-scale defaults; unknown keys are rejected.

use std::path::PathBuf;

use interwave::continuation::{ContinuationSettings, Direction};
use interwave::{Discretization, KernelChoice, PhysicalParameters, Point, VortexPair};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Periodized,
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalSection {
    pub rho: f64,
    pub rho_bar: f64,
    pub g: f64,
    pub sigma: f64,
    pub depth: f64,
    pub half_period: f64,
    pub bernoulli: f64,
    /// Lower vortex center `[x, y]`.
    pub vortex: [f64; 2],
    /// Upper vortex center `[x, y]`.
    pub phantom: [f64; 2],
    pub kernel: KernelName,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        let p = PhysicalParameters::default();
        let (z, zb) = (p.pair.lower(), p.pair.upper());
        Self {
            rho: p.rho,
            rho_bar: p.rho_bar,
            g: p.g,
            sigma: p.sigma,
            depth: p.depth,
            half_period: p.half_period,
            bernoulli: p.bernoulli,
            vortex: [z.x, z.y],
            phantom: [zb.x, zb.y],
            kernel: KernelName::Periodized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub n_modes: usize,
    pub vertical: usize,
    pub delta_guard: f64,
    pub gap_floor: f64,
    pub tol_sing: f64,
    pub dealias: bool,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        let d = Discretization::default();
        Self {
            n_modes: d.n_modes,
            vertical: d.vertical,
            delta_guard: d.delta_guard,
            gap_floor: d.gap_floor,
            tol_sing: d.tol_sing,
            dealias: d.dealias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSection {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub max_steps: usize,
    pub norm_cap: f64,
    /// `"+"` or `"-"`.
    pub direction: String,
    /// Strength used by `single-solve`.
    pub eps: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let c = ContinuationSettings::default();
        Self {
            ds0: c.ds0,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            newton_tol: c.newton_tol,
            newton_max: c.newton_max,
            max_steps: c.max_steps,
            norm_cap: c.norm_cap,
            direction: "+".into(),
            eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write a snapshot every this many branch points; the last point is
    /// always written.
    pub snapshot_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub physical: PhysicalSection,
    pub discretization: DiscretizationSection,
    pub continuation: ContinuationSection,
    pub output: OutputSection,
}

/// Validated configuration ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub physical: PhysicalParameters,
    pub discretization: Discretization,
    pub continuation: ContinuationSettings,
    pub direction: Direction,
    pub eps: f64,
    pub output_dir: Option<PathBuf>,
    pub snapshot_every: usize,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

/// Parses and validates configuration text.
pub fn load_config(text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::from_raw(parse_raw(text)?)
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let bad = |m: String| Err(ConfigError::Validation(m));
        let p = &raw.physical;
        let d = &raw.discretization;
        let c = &raw.continuation;
        if d.n_modes < 8 || d.n_modes % 2 != 0 {
            return bad(format!("n_modes must be even and at least 8, got {}", d.n_modes));
        }
        if d.vertical < 4 {
            return bad(format!("vertical must be at least 4, got {}", d.vertical));
        }
        if raw.output.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if !c.eps.is_finite() {
            return bad("eps must be finite".into());
        }
        let direction: Direction = c.direction.parse().map_err(ConfigError::Validation)?;
        let pair = VortexPair::new(
            Point::new(p.vortex[0], p.vortex[1]),
            Point::new(p.phantom[0], p.phantom[1]),
            p.depth,
        )
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let physical = PhysicalParameters {
            rho: p.rho,
            rho_bar: p.rho_bar,
            g: p.g,
            sigma: p.sigma,
            depth: p.depth,
            half_period: p.half_period,
            bernoulli: p.bernoulli,
            pair,
            kernel: match p.kernel {
                KernelName::Periodized => KernelChoice::Periodized,
                KernelName::FreeSpace => KernelChoice::FreeSpace,
            },
        };
        physical
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let discretization = Discretization {
            n_modes: d.n_modes,
            vertical: d.vertical,
            delta_guard: d.delta_guard,
            gap_floor: d.gap_floor,
            tol_sing: d.tol_sing,
            dealias: d.dealias,
        };
        if !(d.delta_guard > 0.0 && d.gap_floor > 0.0 && d.tol_sing > 0.0) {
            return bad("delta_guard, gap_floor and tol_sing must be positive".into());
        }
        let continuation = ContinuationSettings {
            ds0: c.ds0,
            ds_min: c.ds_min,
            ds_max: c.ds_max,
            newton_tol: c.newton_tol,
            newton_max: c.newton_max,
            max_steps: c.max_steps,
            norm_cap: c.norm_cap,
            delta_guard: d.delta_guard,
            gap_floor: d.gap_floor,
        };
        continuation
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        Ok(Self {
            physical,
            discretization,
            continuation,
            direction,
            eps: c.eps,
            output_dir: raw.output.dir.as_ref().map(PathBuf::from),
            snapshot_every: raw.output.snapshot_every,
            raw,
        })
    }

    /// Fully resolved configuration as TOML, without the output directory.
    pub fn echo(&self) -> String {
        let mut raw = self.raw.clone();
        raw.output.dir = None;
        toml::to_string(&raw).expect("configuration serializes")
    }

    /// SHA-256 of [`RunConfig::echo`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.echo().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
