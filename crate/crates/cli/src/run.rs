//! Run orchestration for the `continue` and `single-solve` modes.

use std::fs;
use std::io;
use std::path::Path;

use interwave::continuation::{
    continue_observed, describe_point, newton_correct, parity_monitor, tangent, Alternative,
    BranchPoint, Direction,
};
use interwave::{ContinuationError, WaveState, WaveSystem};
use thiserror::Error;

use crate::config::RunConfig;
use crate::output::{write_json, BranchTable, Snapshot, Summary, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_GUARD: i32 = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot prepare output directory {path}: {source}")]
    OutputDir { path: String, source: io::Error },
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::OutputDir { .. } | RunError::Config(_) => EXIT_CONFIG,
            RunError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub termination: Option<Alternative>,
    pub points: usize,
    pub message: String,
}

pub fn exit_code_for(alt: Alternative) -> i32 {
    match alt {
        Alternative::MaxStepsReached => EXIT_OK,
        Alternative::NewtonFailure => EXIT_NUMERICAL,
        Alternative::Unbounded
        | Alternative::InterfaceTouchesBoundary
        | Alternative::VortexNearInterface => EXIT_GUARD,
    }
}

fn prepare(out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out.join("snapshots")).map_err(|source| RunError::OutputDir {
        path: out.display().to_string(),
        source,
    })
}

fn build_system(cfg: &RunConfig) -> Result<WaveSystem, RunError> {
    WaveSystem::new(cfg.physical.clone(), cfg.discretization)
        .map_err(|e| RunError::Config(e.to_string()))
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    system: &'a WaveSystem,
    table: BranchTable,
    snapshots: std::path::PathBuf,
    hash: String,
    last_written: Option<usize>,
    error: Option<io::Error>,
}

impl Writer<'_> {
    fn point(&mut self, step: usize, p: &BranchPoint, force_snapshot: bool) {
        if self.error.is_some() {
            return;
        }
        let res = self.table.append(step, p).and_then(|_| {
            if force_snapshot || step % self.cfg.snapshot_every == 0 {
                Snapshot::new(step, p, self.system.grid(), self.cfg.discretization.vertical, &self.hash)
                    .write(&self.snapshots)?;
                self.last_written = Some(step);
            }
            Ok(())
        });
        if let Err(e) = res {
            self.error = Some(e);
        }
    }

    fn snapshot(&mut self, step: usize, p: &BranchPoint) -> io::Result<()> {
        if self.last_written != Some(step) {
            Snapshot::new(step, p, self.system.grid(), self.cfg.discretization.vertical, &self.hash)
                .write(&self.snapshots)?;
            self.last_written = Some(step);
        }
        Ok(())
    }
}

fn summary(cfg: &RunConfig, mode: &str, outcome: &RunOutcome, signs: &[i8], last_eps: Option<f64>) -> Summary {
    Summary {
        schema_version: SCHEMA_VERSION,
        mode: mode.into(),
        direction: cfg.direction.to_string(),
        termination: outcome.termination.map(|a| a.name().to_string()),
        exit_code: outcome.exit_code,
        message: outcome.message.clone(),
        points: outcome.points,
        det_sign_changes: parity_monitor(signs),
        last_eps,
        config_sha256: cfg.hash(),
        config: cfg.echo(),
    }
}

/// Continues the branch from the origin, writing `branch.csv`,
/// `snapshots/point_NNNN.json` and `summary.json` under `out`.
pub fn run_continue(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, RunError> {
    let system = build_system(cfg)?;
    prepare(out)?;
    let hash = cfg.hash();
    let mut w = Writer {
        cfg,
        system: &system,
        table: BranchTable::create(&out.join("branch.csv"), &hash, "continue", &cfg.direction.to_string())?,
        snapshots: out.join("snapshots"),
        hash,
        last_written: None,
        error: None,
    };
    let result = continue_observed(
        &system,
        &WaveState::zeros(system.grid()),
        0.0,
        &cfg.continuation,
        cfg.direction,
        |step, p| w.point(step, p, false),
    );
    if let Some(e) = w.error.take() {
        return Err(e.into());
    }
    let (outcome, signs, last_eps) = match result {
        Ok(branch) => {
            let n = branch.points.len();
            if let Some(last) = branch.points.last() {
                w.snapshot(n - 1, last)?;
            }
            let alt = branch.termination;
            let last = branch.points.last();
            let message = match last {
                Some(p) => format!(
                    "{alt} after {n} points (eps = {:e}, |eta|_inf = {:e}, vortex distance = {:e})",
                    p.eps, p.diagnostics.eta_sup, p.diagnostics.min_vortex_distance
                ),
                None => format!("{alt} with no points"),
            };
            (
                RunOutcome {
                    exit_code: exit_code_for(alt),
                    termination: Some(alt),
                    points: n,
                    message,
                },
                branch.det_signs(),
                last.map(|p| p.eps),
            )
        }
        Err(e) => (
            RunOutcome {
                exit_code: numerical_exit(&e),
                termination: None,
                points: 0,
                message: format!("continuation could not start: {e}"),
            },
            Vec::new(),
            None,
        ),
    };
    write_json(&out.join("summary.json"), &summary(cfg, "continue", &outcome, &signs, last_eps))?;
    Ok(outcome)
}

fn numerical_exit(e: &ContinuationError) -> i32 {
    match e {
        ContinuationError::System(s) if s.is_guard() => EXIT_GUARD,
        ContinuationError::InvalidSettings(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Solves once at the configured strength, starting from the tangent
/// predictor at the origin.
pub fn single_solve(system: &WaveSystem, cfg: &RunConfig) -> Result<(BranchPoint, usize), ContinuationError> {
    let origin = WaveState::zeros(system.grid());
    let eps = cfg.eps;
    let guess = if eps == 0.0 {
        origin
    } else {
        let t = tangent(system, &origin, 0.0, None, Direction::Forward)?;
        let n = system.dim();
        let v = t.rows(0, n) * (eps / t[n]);
        WaveState::unpack(system.grid(), &v.into_owned())?
    };
    let sol = newton_correct(system, &guess, eps, &cfg.continuation)?;
    let point = describe_point(system, &sol.state, eps, sol.iterations)?;
    Ok((point, sol.iterations))
}

pub fn run_single(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, RunError> {
    let system = build_system(cfg)?;
    prepare(out)?;
    let hash = cfg.hash();
    let mut table = BranchTable::create(&out.join("branch.csv"), &hash, "single-solve", &cfg.direction.to_string())?;
    let (outcome, signs, last_eps) = match single_solve(&system, cfg) {
        Ok((p, iterations)) => {
            table.append(0, &p)?;
            Snapshot::new(0, &p, system.grid(), cfg.discretization.vertical, &hash)
                .write(&out.join("snapshots"))?;
            (
                RunOutcome {
                    exit_code: EXIT_OK,
                    termination: None,
                    points: 1,
                    message: format!(
                        "converged at eps = {:e} in {iterations} iterations (residual {:e})",
                        p.eps, p.diagnostics.residual_norm
                    ),
                },
                vec![p.diagnostics.det_sign],
                Some(p.eps),
            )
        }
        Err(e) => (
            RunOutcome {
                exit_code: numerical_exit(&e),
                termination: None,
                points: 0,
                message: format!("single solve failed: {e}"),
            },
            Vec::new(),
            None,
        ),
    };
    write_json(&out.join("summary.json"), &summary(cfg, "single-solve", &outcome, &signs, last_eps))?;
    Ok(outcome)
}
