//! Newton correction, pseudo-arclength continuation in the vortex strength,
//! determinant-sign monitoring and branch termination classification.
//!
//! The engine is written against [`BranchProblem`], a square system
//! `F(x, lambda) = 0`; [`WaveSystem`] implements it with `x` the packed wave
//! state and `lambda = eps`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{ContinuationError, KernelError, LayerError, SystemError};
use crate::system::{WaveState, WaveSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Max-abs residual target for every accepted point.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Accepted continuation steps after the starting point.
    pub max_steps: usize,
    pub norm_cap: f64,
    pub delta_guard: f64,
    pub gap_floor: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            ds0: 1e-3,
            ds_min: 1e-6,
            ds_max: 2e-2,
            newton_tol: 1e-10,
            newton_max: 8,
            max_steps: 40,
            norm_cap: 100.0,
            delta_guard: 0.05,
            gap_floor: 0.02,
        }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        let bad = |m: &str| Err(ContinuationError::InvalidSettings(m.to_string()));
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds0 && self.ds0 <= self.ds_max) {
            return bad("0 < ds_min <= ds0 <= ds_max required");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol > 0 required");
        }
        if self.newton_max == 0 {
            return bad("newton_max >= 1 required");
        }
        if !(self.norm_cap > 0.0) {
            return bad("norm_cap > 0 required");
        }
        if !(self.delta_guard > 0.0 && self.gap_floor > 0.0) {
            return bad("guards must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" | "forward" => Ok(Direction::Forward),
            "-" | "backward" => Ok(Direction::Backward),
            other => Err(format!("direction must be + or -, got {other:?}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "+",
            Direction::Backward => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alternative {
    Unbounded,
    InterfaceTouchesBoundary,
    VortexNearInterface,
    MaxStepsReached,
    NewtonFailure,
}

impl Alternative {
    /// True for the terminations raised by a geometric or blow-up monitor.
    pub fn is_monitor_stop(self) -> bool {
        matches!(
            self,
            Alternative::Unbounded
                | Alternative::InterfaceTouchesBoundary
                | Alternative::VortexNearInterface
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Alternative::Unbounded => "Unbounded",
            Alternative::InterfaceTouchesBoundary => "InterfaceTouchesBoundary",
            Alternative::VortexNearInterface => "VortexNearInterface",
            Alternative::MaxStepsReached => "MaxStepsReached",
            Alternative::NewtonFailure => "NewtonFailure",
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar monitors of an accepted point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monitors {
    /// Blow-up norm of `(x, lambda)`.
    pub norm: f64,
    /// Distance from the interface crest to the nearest wall, `d - |eta|_inf`.
    pub boundary_gap: f64,
    pub vortex_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardTrip {
    Vortex,
    Boundary,
}

impl GuardTrip {
    pub fn from_error(err: &SystemError) -> Option<Self> {
        match err {
            SystemError::Kernel(KernelError::VortexTooClose { .. }) => Some(GuardTrip::Vortex),
            SystemError::Layer(LayerError::DegenerateStrip { .. }) => Some(GuardTrip::Boundary),
            _ => None,
        }
    }
}

/// What was known when continuation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TerminationHistory {
    pub last: Option<Monitors>,
    /// Guard raised while trying to extend the branch past `last`.
    pub guard: Option<GuardTrip>,
    pub step_failed: bool,
}

/// Precedence: `VortexNearInterface > InterfaceTouchesBoundary > Unbounded`,
/// then `NewtonFailure` if the last step could not be completed, else
/// `MaxStepsReached`.
pub fn classify_termination(
    history: &TerminationHistory,
    settings: &ContinuationSettings,
) -> Alternative {
    let m = history.last;
    let vortex = history.guard == Some(GuardTrip::Vortex)
        || m.is_some_and(|m| m.vortex_distance < settings.delta_guard);
    let boundary = history.guard == Some(GuardTrip::Boundary)
        || m.is_some_and(|m| m.boundary_gap < settings.gap_floor);
    let unbounded = m.is_some_and(|m| !(m.norm <= settings.norm_cap));
    if vortex {
        Alternative::VortexNearInterface
    } else if boundary {
        Alternative::InterfaceTouchesBoundary
    } else if unbounded {
        Alternative::Unbounded
    } else if history.step_failed {
        Alternative::NewtonFailure
    } else {
        Alternative::MaxStepsReached
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub d_lambda: DVector<f64>,
}

/// A square system `F(x, lambda) = 0` to be continued in `lambda`.
pub trait BranchProblem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>, SystemError>;
    fn linearize(&self, x: &DVector<f64>, lambda: f64) -> Result<Linearization, SystemError>;
    /// Diagonal arclength weights for `(x, lambda)`, length `dim + 1`.
    fn weights(&self) -> DVector<f64>;
    fn monitors(&self, x: &DVector<f64>, lambda: f64) -> Monitors;
}

/// `F = (x1^2 + x2 - lambda, x2 - x1/2)`: a simple fold at
/// `x1 = -1/4, lambda = -1/16`, where `det D_x F = 2 x1 + 1/2` changes sign.
#[derive(Debug, Clone, Copy, Default)]
pub struct FoldProblem;

impl BranchProblem for FoldProblem {
    fn dim(&self) -> usize {
        2
    }

    fn residual(&self, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>, SystemError> {
        Ok(DVector::from_vec(vec![
            x[0] * x[0] + x[1] - lambda,
            x[1] - 0.5 * x[0],
        ]))
    }

    fn linearize(&self, x: &DVector<f64>, lambda: f64) -> Result<Linearization, SystemError> {
        Ok(Linearization {
            residual: self.residual(x, lambda)?,
            jacobian: DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 1.0, -0.5, 1.0]),
            d_lambda: DVector::from_vec(vec![-1.0, 0.0]),
        })
    }

    fn weights(&self) -> DVector<f64> {
        DVector::from_element(3, 1.0)
    }

    fn monitors(&self, x: &DVector<f64>, lambda: f64) -> Monitors {
        Monitors {
            norm: (x.norm_squared() + lambda * lambda).sqrt(),
            boundary_gap: f64::INFINITY,
            vortex_distance: f64::INFINITY,
        }
    }
}

/// Determinant sign from a pivoted LU, with the extreme singular values.
/// The sign is 0 when `sigma_min < 1e-12 sigma_max`.
pub fn jacobian_signature(j: &DMatrix<f64>) -> (i8, f64, f64) {
    let sv = j.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return (0, smin, smax);
    }
    let lu = j.clone().lu();
    let mut sign: f64 = lu.p().determinant();
    for v in lu.u().diagonal().iter() {
        sign *= v.signum();
    }
    (if sign > 0.0 { 1 } else { -1 }, smin, smax)
}

/// Indices `i` whose determinant sign differs from the last non-zero sign
/// before it. Zero signs are skipped.
pub fn parity_monitor(signs: &[i8]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = 0;
    for (i, &s) in signs.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            out.push(i);
        }
        last = s;
    }
    out
}

fn wdot(w: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    w.iter().zip(a.iter()).zip(b.iter()).map(|((w, a), b)| w * a * b).sum()
}

/// Null vector of `[J | f_lambda]`, unit in the weighted norm. Without a
/// previous tangent the lambda component is fixed by `direction`; otherwise
/// the result has positive weighted inner product with `previous`.
pub fn bordered_tangent(
    jacobian: &DMatrix<f64>,
    d_lambda: &DVector<f64>,
    weights: &DVector<f64>,
    previous: Option<&DVector<f64>>,
    direction: Direction,
) -> Result<DVector<f64>, ContinuationError> {
    let n = jacobian.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(jacobian);
    a.view_mut((0, n), (n, 1)).copy_from(d_lambda);
    match previous {
        Some(t) => {
            for i in 0..=n {
                a[(n, i)] = weights[i] * t[i];
            }
        }
        None => a[(n, n)] = 1.0,
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let mut tau = a
        .lu()
        .solve(&rhs)
        .filter(|t| t.iter().all(|v| v.is_finite()))
        .ok_or(ContinuationError::SingularBorderedSystem)?;
    let norm = wdot(weights, &tau, &tau).sqrt();
    if !(norm > 0.0 && norm < 1e14) {
        return Err(ContinuationError::SingularBorderedSystem);
    }
    tau /= norm;
    let flip = match previous {
        Some(t) => wdot(weights, &tau, t) < 0.0,
        None => tau[n] * direction.sign() < 0.0,
    };
    if flip {
        tau = -tau;
    }
    Ok(tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Linearization at the converged point.
    pub linearization: Linearization,
}

/// Arclength constraint `<w tau, y - anchor> = 0`.
struct Constraint {
    wt: DVector<f64>,
    anchor: DVector<f64>,
}

impl Constraint {
    fn value(&self, x: &DVector<f64>, lambda: f64) -> f64 {
        let n = x.len();
        let mut s = self.wt[n] * (lambda - self.anchor[n]);
        for i in 0..n {
            s += self.wt[i] * (x[i] - self.anchor[i]);
        }
        s
    }
}

fn extended(f: &DVector<f64>, arc: Option<&Constraint>, x: &DVector<f64>, lambda: f64) -> DVector<f64> {
    match arc {
        None => f.clone(),
        Some(c) => {
            let mut g = f.clone().resize_vertically(f.len() + 1, 0.0);
            g[f.len()] = c.value(x, lambda);
            g
        }
    }
}

fn corrector<P: BranchProblem + ?Sized>(
    p: &P,
    mut x: DVector<f64>,
    mut lambda: f64,
    arc: Option<&Constraint>,
    settings: &ContinuationSettings,
) -> Result<NewtonOutcome, ContinuationError> {
    let n = p.dim();
    let mut iterations = 0;
    loop {
        let lin = p.linearize(&x, lambda)?;
        let g = extended(&lin.residual, arc, &x, lambda);
        let r = g.amax();
        if !r.is_finite() {
            return Err(ContinuationError::NewtonFailure { iterations, residual: r });
        }
        if r <= settings.newton_tol {
            return Ok(NewtonOutcome {
                residual_norm: lin.residual.amax(),
                x,
                lambda,
                iterations,
                linearization: lin,
            });
        }
        if iterations >= settings.newton_max {
            return Err(ContinuationError::NewtonFailure { iterations, residual: r });
        }
        let delta = match arc {
            None => lin.jacobian.clone().lu().solve(&(-&g)),
            Some(c) => {
                let mut a = DMatrix::zeros(n + 1, n + 1);
                a.view_mut((0, 0), (n, n)).copy_from(&lin.jacobian);
                a.view_mut((0, n), (n, 1)).copy_from(&lin.d_lambda);
                for i in 0..=n {
                    a[(n, i)] = c.wt[i];
                }
                a.lu().solve(&(-&g))
            }
        }
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .ok_or(ContinuationError::NewtonFailure { iterations, residual: r })?;

        // damping: halve on residual increase, at most five times
        let mut t = 1.0;
        let mut halvings = 0;
        loop {
            let xt = &x + delta.rows(0, n) * t;
            let lt = if arc.is_some() { lambda + t * delta[n] } else { lambda };
            let trial = p.residual(&xt, lt).map(|f| extended(&f, arc, &xt, lt).amax());
            let accept = match &trial {
                Ok(rt) => *rt <= r || halvings == 5,
                Err(e) if e.is_guard() && halvings < 5 => false,
                Err(_) => halvings == 5,
            };
            if accept {
                if let Err(e) = trial {
                    return Err(e.into());
                }
                x = xt;
                lambda = lt;
                break;
            }
            t *= 0.5;
            halvings += 1;
        }
        iterations += 1;
    }
}

/// Damped Newton at fixed `lambda`.
pub fn newton_fixed<P: BranchProblem + ?Sized>(
    p: &P,
    guess: &DVector<f64>,
    lambda: f64,
    settings: &ContinuationSettings,
) -> Result<NewtonOutcome, ContinuationError> {
    corrector(p, guess.clone(), lambda, None, settings)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub x: DVector<f64>,
    pub lambda: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub det_sign: i8,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub monitors: Monitors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub points: Vec<PathPoint>,
    /// Unit tangent at each point, `(dx, dlambda)`.
    pub tangents: Vec<DVector<f64>>,
    pub termination: Alternative,
}

impl Path {
    pub fn det_signs(&self) -> Vec<i8> {
        self.points.iter().map(|p| p.det_sign).collect()
    }
}

fn path_point<P: BranchProblem + ?Sized>(p: &P, out: &NewtonOutcome) -> PathPoint {
    let (det_sign, sigma_min, sigma_max) = jacobian_signature(&out.linearization.jacobian);
    PathPoint {
        x: out.x.clone(),
        lambda: out.lambda,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        det_sign,
        sigma_min,
        sigma_max,
        monitors: p.monitors(&out.x, out.lambda),
    }
}

/// Pseudo-arclength continuation from `(x0, lambda0)`, which is first
/// corrected at fixed `lambda0`. Step failures shrink `ds`; once it drops
/// below `ds_min` the run stops with a classified [`Alternative`].
pub fn trace_path<P: BranchProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    lambda0: f64,
    settings: &ContinuationSettings,
    direction: Direction,
) -> Result<Path, ContinuationError> {
    trace_path_observed(p, x0, lambda0, settings, direction, &mut |_| {})
}

/// [`trace_path`] calling `observer` on every point as it is accepted.
pub fn trace_path_observed<P: BranchProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    lambda0: f64,
    settings: &ContinuationSettings,
    direction: Direction,
    observer: &mut dyn FnMut(&PathPoint),
) -> Result<Path, ContinuationError> {
    settings.validate()?;
    let n = p.dim();
    let w = p.weights();
    let start = newton_fixed(p, x0, lambda0, settings)?;
    let lin = &start.linearization;
    let mut tau = bordered_tangent(&lin.jacobian, &lin.d_lambda, &w, None, direction)?;
    let mut points = vec![path_point(p, &start)];
    observer(&points[0]);
    let mut tangents = vec![tau.clone()];
    let mut ds = settings.ds0;
    let mut guard = None;

    let termination = loop {
        let last = points.last().unwrap();
        let threshold = classify_termination(
            &TerminationHistory {
                last: Some(last.monitors),
                ..TerminationHistory::default()
            },
            settings,
        );
        if threshold.is_monitor_stop() {
            break threshold;
        }
        if points.len() > settings.max_steps {
            break Alternative::MaxStepsReached;
        }

        let mut y = last.x.clone().resize_vertically(n + 1, 0.0);
        y[n] = last.lambda;
        let pred = &y + &tau * ds;
        let arc = Constraint {
            wt: w.component_mul(&tau),
            anchor: pred.clone(),
        };
        let step = corrector(p, pred.rows(0, n).into_owned(), pred[n], Some(&arc), settings)
            .and_then(|out| {
                let lin = &out.linearization;
                let next = bordered_tangent(&lin.jacobian, &lin.d_lambda, &w, Some(&tau), direction)?;
                Ok((out, next))
            });
        match step {
            Ok((out, next)) => {
                points.push(path_point(p, &out));
                observer(points.last().unwrap());
                tangents.push(next.clone());
                tau = next;
                guard = None;
                if out.iterations <= 3 {
                    ds = (ds * 1.3).min(settings.ds_max);
                }
                continue;
            }
            Err(ContinuationError::System(e)) => {
                if let Some(g) = GuardTrip::from_error(&e) {
                    // keep the most severe guard seen while shrinking
                    if guard != Some(GuardTrip::Vortex) {
                        guard = Some(g);
                    }
                }
            }
            Err(_) => {}
        }
        ds *= 0.5;
        if ds < settings.ds_min {
            break classify_termination(
                &TerminationHistory {
                    last: Some(points.last().unwrap().monitors),
                    guard,
                    step_failed: true,
                },
                settings,
            );
        }
    };
    Ok(Path {
        points,
        tangents,
        termination,
    })
}

impl BranchProblem for WaveSystem {
    fn dim(&self) -> usize {
        WaveSystem::dim(self)
    }

    fn residual(&self, x: &DVector<f64>, lambda: f64) -> Result<DVector<f64>, SystemError> {
        let state = WaveState::unpack(self.grid(), x)?;
        Ok(WaveSystem::residual(self, &state, lambda)?.pack())
    }

    fn linearize(&self, x: &DVector<f64>, lambda: f64) -> Result<Linearization, SystemError> {
        let state = WaveState::unpack(self.grid(), x)?;
        let (res, jacobian, de) = WaveSystem::linearize(self, &state, lambda)?;
        Ok(Linearization {
            residual: res.pack(),
            jacobian,
            d_lambda: de.pack(),
        })
    }

    /// Discrete `H^1` weights on every field coefficient, unit weights on
    /// `c` and `eps`.
    fn weights(&self) -> DVector<f64> {
        let grid = self.grid();
        let n1 = grid.n_coeffs();
        let l = grid.half_period();
        let mut w = DVector::from_element(3 * n1 + 2, 1.0);
        for f in 0..3 {
            for k in 0..n1 {
                let base = if k == 0 { 2.0 * l } else { l };
                w[f * n1 + k] = base * (1.0 + grid.wavenumber(k).powi(2));
            }
        }
        w
    }

    fn monitors(&self, x: &DVector<f64>, lambda: f64) -> Monitors {
        match WaveState::unpack(self.grid(), x) {
            Ok(state) => {
                let diag = self.diagnostics(&state);
                Monitors {
                    norm: self.state_norm(&state, lambda),
                    boundary_gap: self.params().depth - diag.eta_sup,
                    vortex_distance: diag.min_vortex_distance,
                }
            }
            Err(_) => Monitors {
                norm: f64::INFINITY,
                boundary_gap: f64::NEG_INFINITY,
                vortex_distance: f64::NEG_INFINITY,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDiagnostics {
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub det_sign: i8,
    pub eta_sup: f64,
    pub eta_sobolev: f64,
    pub eta_at_zero: f64,
    pub min_vortex_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub state: WaveState,
    pub eps: f64,
    pub diagnostics: PointDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub tangents: Vec<DVector<f64>>,
    pub termination: Alternative,
}

impl Branch {
    pub fn det_signs(&self) -> Vec<i8> {
        self.points.iter().map(|p| p.diagnostics.det_sign).collect()
    }
}

impl WaveSystem {
    fn branch_point(&self, p: &PathPoint) -> Result<BranchPoint, SystemError> {
        let state = WaveState::unpack(self.grid(), &p.x)?;
        let diag = self.diagnostics(&state);
        Ok(BranchPoint {
            eps: p.lambda,
            diagnostics: PointDiagnostics {
                residual_norm: p.residual_norm,
                newton_iterations: p.iterations,
                sigma_min: p.sigma_min,
                sigma_max: p.sigma_max,
                det_sign: p.det_sign,
                eta_sup: diag.eta_sup,
                eta_sobolev: diag.eta_sobolev,
                eta_at_zero: diag.eta_at_zero,
                min_vortex_distance: diag.min_vortex_distance,
            },
            state,
        })
    }
}

/// Branch diagnostics for a solution obtained outside continuation.
pub fn describe_point(
    system: &WaveSystem,
    state: &WaveState,
    eps: f64,
    iterations: usize,
) -> Result<BranchPoint, ContinuationError> {
    let x = state.pack();
    let linearization = BranchProblem::linearize(system, &x, eps)?;
    let out = NewtonOutcome {
        residual_norm: linearization.residual.amax(),
        x,
        lambda: eps,
        iterations,
        linearization,
    };
    Ok(system.branch_point(&path_point(system, &out))?)
}

/// Wave state corrected at fixed `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub state: WaveState,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn newton_correct(
    system: &WaveSystem,
    guess: &WaveState,
    eps: f64,
    settings: &ContinuationSettings,
) -> Result<Correction, ContinuationError> {
    system.check_state(guess)?;
    let out = newton_fixed(system, &guess.pack(), eps, settings)?;
    Ok(Correction {
        state: WaveState::unpack(system.grid(), &out.x)?,
        iterations: out.iterations,
        residual_norm: out.residual_norm,
    })
}

/// Unit branch tangent `(d state, d eps)` at a solution.
pub fn tangent(
    system: &WaveSystem,
    state: &WaveState,
    eps: f64,
    previous: Option<&DVector<f64>>,
    direction: Direction,
) -> Result<DVector<f64>, ContinuationError> {
    let (_, jac, de) = system.linearize(state, eps)?;
    bordered_tangent(&jac, &de.pack(), &BranchProblem::weights(system), previous, direction)
}

/// Continues the branch from the trivial solution in the given direction.
pub fn continue_branch(
    system: &WaveSystem,
    settings: &ContinuationSettings,
    direction: Direction,
) -> Result<Branch, ContinuationError> {
    continue_from(system, &WaveState::zeros(system.grid()), 0.0, settings, direction)
}

pub fn continue_from(
    system: &WaveSystem,
    start: &WaveState,
    eps: f64,
    settings: &ContinuationSettings,
    direction: Direction,
) -> Result<Branch, ContinuationError> {
    continue_observed(system, start, eps, settings, direction, |_, _| {})
}

/// Continuation handing each accepted point and its index to `observer`
/// before the next step is attempted.
pub fn continue_observed(
    system: &WaveSystem,
    start: &WaveState,
    eps: f64,
    settings: &ContinuationSettings,
    direction: Direction,
    mut observer: impl FnMut(usize, &BranchPoint),
) -> Result<Branch, ContinuationError> {
    system.check_state(start)?;
    let mut count = 0;
    let path = trace_path_observed(system, &start.pack(), eps, settings, direction, &mut |p| {
        if let Ok(bp) = system.branch_point(p) {
            observer(count, &bp);
        }
        count += 1;
    })?;
    let points = path
        .points
        .iter()
        .map(|p| system.branch_point(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Branch {
        points,
        tangents: path.tangents,
        termination: path.termination,
    })
}
