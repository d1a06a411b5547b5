//! The discrete system map `F = (F1, F2, F3, F4)` for steady interfacial
//! waves with a vortex pair, its Jacobian and its strength derivative.
//!
//! Unknowns are packed as `[eta_0..N, xi_bar_0..N, xi_0..N, c]` (cosine
//! coefficients) and residuals as `[F1_0..N, F2_0..N, F3_0..N, F4]`. The
//! Bernoulli residual is formed nodally on the half grid and projected onto
//! cosine modes `0..N`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{KernelError, SystemError};
use crate::layer::{
    Layer, LayerDiscretization, LayerGeometry, LayerLinearization, LayerOperator, LayerSettings,
    LayerSolution,
};
use crate::spectral::{CollocationGrid, EvenField};
use crate::vortex::{self, vortex_traces, Kernel, KernelChoice, Point, VortexPair, VortexTraces};

/// Sobolev index used for the diagnostic and blow-up norms.
pub const SOBOLEV_INDEX: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParameters {
    /// Lower (heavier) density.
    pub rho: f64,
    /// Upper density.
    pub rho_bar: f64,
    pub g: f64,
    /// Surface tension coefficient.
    pub sigma: f64,
    /// Distance from the mean interface to either wall.
    pub depth: f64,
    pub half_period: f64,
    /// Bernoulli constant; zero keeps the flat state a solution.
    pub bernoulli: f64,
    pub pair: VortexPair,
    pub kernel: KernelChoice,
}

impl Default for PhysicalParameters {
    fn default() -> Self {
        Self {
            rho: 1.0,
            rho_bar: 0.9,
            g: 1.0,
            sigma: 0.1,
            depth: 1.0,
            half_period: std::f64::consts::PI,
            bernoulli: 0.0,
            pair: VortexPair::mirrored(0.5, 1.0).expect("default pair is valid"),
            kernel: KernelChoice::Periodized,
        }
    }
}

impl PhysicalParameters {
    pub fn validate(&self) -> Result<(), SystemError> {
        let bad = |m: &str| Err(SystemError::InvalidParameters(m.to_string()));
        let positive = [
            ("rho", self.rho),
            ("g", self.g),
            ("sigma", self.sigma),
            ("depth", self.depth),
            ("half_period", self.half_period),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.rho_bar > 0.0) {
            return bad("upper density must be positive");
        }
        if !((self.rho_bar - self.rho) * self.g < 0.0) {
            return bad("(ρ̄−ρ)g < 0 required: the upper fluid must be lighter");
        }
        if !self.bernoulli.is_finite() {
            return bad("Bernoulli constant must be finite");
        }
        VortexPair::new(self.pair.lower(), self.pair.upper(), self.depth)
            .map_err(SystemError::Kernel)?;
        Ok(())
    }

    /// `(rho_bar - rho) g - sigma kappa^2`, the flat Bernoulli multiplier.
    pub fn flat_multiplier(&self, kappa: f64) -> f64 {
        (self.rho_bar - self.rho) * self.g - self.sigma * kappa * kappa
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    /// Retained Fourier modes `N`.
    pub n_modes: usize,
    /// Chebyshev degree `M` in each layer.
    pub vertical: usize,
    /// Minimum admissible distance between the interface and a vortex.
    pub delta_guard: f64,
    /// Minimum admissible layer thickness.
    pub gap_floor: f64,
    pub tol_sing: f64,
    /// Apply 2/3 truncation to the quadratic transport terms of `F1`.
    pub dealias: bool,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            n_modes: 64,
            vertical: 32,
            delta_guard: 0.05,
            gap_floor: 0.02,
            tol_sing: 1e-12,
            dealias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub eta: EvenField,
    pub xi_bar: EvenField,
    pub xi: EvenField,
    pub c: f64,
}

impl WaveState {
    pub fn zeros(grid: &CollocationGrid) -> Self {
        Self {
            eta: EvenField::zeros(grid),
            xi_bar: EvenField::zeros(grid),
            xi: EvenField::zeros(grid),
            c: 0.0,
        }
    }

    /// Length of the packed unknown vector, `3(N + 1) + 1`.
    pub fn dim(grid: &CollocationGrid) -> usize {
        3 * grid.n_coeffs() + 1
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(3 * self.eta.coeffs().len() + 1);
        v.extend_from_slice(self.eta.coeffs());
        v.extend_from_slice(self.xi_bar.coeffs());
        v.extend_from_slice(self.xi.coeffs());
        v.push(self.c);
        DVector::from_vec(v)
    }

    pub fn unpack(grid: &CollocationGrid, v: &DVector<f64>) -> Result<Self, SystemError> {
        let n1 = grid.n_coeffs();
        if v.len() != 3 * n1 + 1 {
            return Err(SystemError::ShapeMismatch(format!(
                "packed state has length {}, expected {}",
                v.len(),
                3 * n1 + 1
            )));
        }
        let field = |b: usize| EvenField::from_coeffs(v.rows(b * n1, n1).iter().copied().collect());
        Ok(Self {
            eta: field(0),
            xi_bar: field(1),
            xi: field(2),
            c: v[3 * n1],
        })
    }

    /// Image under `(eta, xi_bar, xi, c) -> (eta, -xi_bar, -xi, -c)`.
    pub fn mirrored(&self) -> Self {
        Self {
            eta: self.eta.clone(),
            xi_bar: self.xi_bar.scaled(-1.0),
            xi: self.xi.scaled(-1.0),
            c: -self.c,
        }
    }

    /// Zero-pads or truncates every field to `n_modes`.
    pub fn resampled(&self, n_modes: usize) -> Self {
        Self {
            eta: self.eta.resampled(n_modes),
            xi_bar: self.xi_bar.resampled(n_modes),
            xi: self.xi.resampled(n_modes),
            c: self.c,
        }
    }

    /// `sqrt(|eta|^2 + |xi_bar|^2 + |xi|^2 + c^2 + eps^2)` with `H^s` field norms.
    pub fn norm_with(&self, eps: f64, grid: &CollocationGrid, s: u32) -> f64 {
        (self.eta.sobolev_norm_sq(grid, s)
            + self.xi_bar.sobolev_norm_sq(grid, s)
            + self.xi.sobolev_norm_sq(grid, s)
            + self.c * self.c
            + eps * eps)
            .sqrt()
    }

    fn check(&self, grid: &CollocationGrid) -> Result<(), SystemError> {
        let n1 = grid.n_coeffs();
        for (name, f) in [("eta", &self.eta), ("xi_bar", &self.xi_bar), ("xi", &self.xi)] {
            if f.coeffs().len() != n1 {
                return Err(SystemError::ShapeMismatch(format!(
                    "{name} has {} coefficients, expected {n1}",
                    f.coeffs().len()
                )));
            }
            if f.coeffs().iter().any(|a| !a.is_finite()) {
                return Err(SystemError::NonFiniteEntry("state"));
            }
        }
        if !self.c.is_finite() {
            return Err(SystemError::NonFiniteEntry("state"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: EvenField,
    pub r2: EvenField,
    pub r3: EvenField,
    pub r4: f64,
}

impl Residual {
    pub fn pack(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(3 * self.r1.coeffs().len() + 1);
        v.extend_from_slice(self.r1.coeffs());
        v.extend_from_slice(self.r2.coeffs());
        v.extend_from_slice(self.r3.coeffs());
        v.push(self.r4);
        DVector::from_vec(v)
    }

    /// Largest absolute coefficient over all blocks.
    pub fn max_abs(&self) -> f64 {
        self.block_max().into_iter().fold(0.0, f64::max)
    }

    /// Largest absolute coefficient per block.
    pub fn block_max(&self) -> [f64; 4] {
        let m = |f: &EvenField| f.coeffs().iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        [m(&self.r1), m(&self.r2), m(&self.r3), self.r4.abs()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

/// Nodal quantities shared by the residual, its Jacobian and `d_eps`.
struct Evaluation {
    eta: DVector<f64>,
    ex: DVector<f64>,
    exx: DVector<f64>,
    xi_bar: DVector<f64>,
    xi: DVector<f64>,
    xbx: DVector<f64>,
    xx: DVector<f64>,
    g: DVector<f64>,
    gb: DVector<f64>,
    traces: VortexTraces,
    lower: LayerSolution,
    upper: LayerSolution,
    probe: f64,
}

struct Velocities {
    vy: DVector<f64>,
    vx: DVector<f64>,
    vby: DVector<f64>,
    vbx: DVector<f64>,
    uy: DVector<f64>,
    ux: DVector<f64>,
    uby: DVector<f64>,
    ubx: DVector<f64>,
}

/// Point-in-time summary of a state used by the branch diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics {
    pub eta_sup: f64,
    pub eta_sobolev: f64,
    pub eta_at_zero: f64,
    pub min_vortex_distance: f64,
    pub min_gap: f64,
}

#[derive(Debug, Clone)]
pub struct WaveSystem {
    params: PhysicalParameters,
    disc: Discretization,
    grid: CollocationGrid,
    layers: LayerDiscretization,
    kernel: Kernel,
    c1: f64,
}

impl WaveSystem {
    pub fn new(params: PhysicalParameters, disc: Discretization) -> Result<Self, SystemError> {
        params.validate()?;
        if !(disc.delta_guard > 0.0 && disc.gap_floor > 0.0 && disc.tol_sing > 0.0) {
            return Err(SystemError::InvalidParameters(
                "guards and singularity tolerance must be positive".into(),
            ));
        }
        let grid = CollocationGrid::new(params.half_period, disc.n_modes)?;
        let layers = LayerDiscretization::new(
            &grid,
            LayerSettings {
                vertical: disc.vertical,
                gap_floor: disc.gap_floor,
                point_guard: disc.delta_guard,
                ..LayerSettings::default()
            },
        )?;
        let kernel = Kernel::new(params.kernel, params.half_period).with_tol_sing(disc.tol_sing);
        let c1 = vortex::c1(&params.pair, &kernel)?;
        Ok(Self {
            params,
            disc,
            grid,
            layers,
            kernel,
            c1,
        })
    }

    pub fn params(&self) -> &PhysicalParameters {
        &self.params
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn dim(&self) -> usize {
        WaveState::dim(&self.grid)
    }

    /// The same physics at a different resolution.
    pub fn with_resolution(&self, n_modes: usize, vertical: usize) -> Result<Self, SystemError> {
        Self::new(
            self.params.clone(),
            Discretization {
                n_modes,
                vertical,
                ..self.disc
            },
        )
    }

    fn nodal(&self, f: &EvenField) -> DVector<f64> {
        DVector::from_vec(f.half_values(&self.grid))
    }

    fn to_field(&self, v: &DVector<f64>) -> EvenField {
        EvenField::from_half_values(&self.grid, v.as_slice())
    }

    fn geometry(&self, which: Layer, eta: &EvenField) -> Result<LayerGeometry, SystemError> {
        Ok(LayerGeometry::new(
            which,
            self.params.depth,
            eta.clone(),
            &self.grid,
            self.disc.gap_floor,
        )?)
    }

    /// Checks the admissibility guards without solving anything.
    pub fn check_state(&self, state: &WaveState) -> Result<(), SystemError> {
        state.check(&self.grid)?;
        let dist = vortex::min_vortex_distance(&state.eta, &self.params.pair, &self.kernel, &self.grid);
        if dist <= self.disc.delta_guard {
            return Err(KernelError::VortexTooClose {
                distance: dist,
                guard: self.disc.delta_guard,
            }
            .into());
        }
        self.geometry(Layer::Lower, &state.eta)?;
        self.geometry(Layer::Upper, &state.eta)?;
        Ok(())
    }

    fn evaluate(&self, state: &WaveState) -> Result<Evaluation, SystemError> {
        state.check(&self.grid)?;
        let traces = vortex_traces(
            &state.eta,
            &self.params.pair,
            &self.kernel,
            &self.grid,
            self.disc.delta_guard,
        )?;
        let lower_op = Arc::new(LayerOperator::new(
            &self.layers,
            self.geometry(Layer::Lower, &state.eta)?,
        )?);
        let upper_op = Arc::new(LayerOperator::new(
            &self.layers,
            self.geometry(Layer::Upper, &state.eta)?,
        )?);
        let dx = self.grid.dx_matrix();
        let eta = self.nodal(&state.eta);
        let xi = self.nodal(&state.xi);
        let xi_bar = self.nodal(&state.xi_bar);
        let lower = lower_op.solve(xi.as_slice())?;
        let upper = upper_op.solve(xi_bar.as_slice())?;
        let probe = lower.eval_dy(self.params.pair.lower())?;
        Ok(Evaluation {
            ex: dx * &eta,
            exx: self.grid.dxx_matrix() * &eta,
            xx: dx * &xi,
            xbx: dx * &xi_bar,
            g: lower.dno_nodal(),
            gb: upper.dno_nodal(),
            eta,
            xi,
            xi_bar,
            traces,
            lower,
            upper,
            probe,
        })
    }

    fn velocities(&self, ev: &Evaluation, eps: f64) -> Velocities {
        let n = ev.eta.len();
        let t = &ev.traces;
        let q = |j: usize| 1.0 + ev.ex[j] * ev.ex[j];
        let vy = DVector::from_fn(n, |j, _| (ev.g[j] + ev.ex[j] * ev.xx[j]) / q(j));
        let vx = DVector::from_fn(n, |j, _| (ev.xx[j] - ev.ex[j] * ev.g[j]) / q(j));
        let vby = DVector::from_fn(n, |j, _| (ev.ex[j] * ev.xbx[j] - ev.gb[j]) / q(j));
        let vbx = DVector::from_fn(n, |j, _| (ev.xbx[j] + ev.ex[j] * ev.gb[j]) / q(j));
        Velocities {
            uy: DVector::from_fn(n, |j, _| vy[j] + eps * t.phi_y[j]),
            ux: DVector::from_fn(n, |j, _| vx[j] + eps * t.phi_x[j]),
            uby: DVector::from_fn(n, |j, _| vby[j] - eps * t.phi_y[j]),
            ubx: DVector::from_fn(n, |j, _| vbx[j] - eps * t.phi_x[j]),
            vy,
            vx,
            vby,
            vbx,
        }
    }

    fn dealias_mask(&self) -> Option<usize> {
        self.disc.dealias.then(|| 2 * self.grid.n_modes() / 3)
    }

    fn assemble_residual(&self, state: &WaveState, eps: f64, ev: &Evaluation) -> Result<Residual, SystemError> {
        let p = &self.params;
        let v = self.velocities(ev, eps);
        let n = ev.eta.len();
        let c = state.c;
        let transport = DVector::from_fn(n, |j, _| {
            c * (p.rho_bar * v.uby[j] - p.rho * v.uy[j])
                + 0.5 * p.rho_bar * (v.uby[j].powi(2) + v.ubx[j].powi(2))
                - 0.5 * p.rho * (v.uy[j].powi(2) + v.ux[j].powi(2))
        });
        let statics = DVector::from_fn(n, |j, _| {
            let q = 1.0 + ev.ex[j] * ev.ex[j];
            (p.rho_bar - p.rho) * p.g * ev.eta[j] + p.sigma * ev.exx[j] / q.powf(1.5) - p.bernoulli
        });
        let mut transport = self.to_field(&transport);
        if self.disc.dealias {
            transport = transport.dealiased();
        }
        let r1 = transport.axpy(1.0, &self.to_field(&statics));
        let t = &ev.traces;
        let r2 = DVector::from_fn(n, |j, _| ev.xi_bar[j] - eps * t.phi[j] + c * ev.eta[j]);
        let r3 = DVector::from_fn(n, |j, _| ev.xi[j] + eps * t.phi[j] + c * ev.eta[j]);
        let res = Residual {
            r1,
            r2: self.to_field(&r2),
            r3: self.to_field(&r3),
            r4: c + ev.probe - self.c1 * eps,
        };
        if res.pack().iter().any(|x| !x.is_finite()) {
            return Err(SystemError::NonFiniteEntry("residual"));
        }
        Ok(res)
    }

    pub fn residual(&self, state: &WaveState, eps: f64) -> Result<Residual, SystemError> {
        let ev = self.evaluate(state)?;
        self.assemble_residual(state, eps, &ev)
    }

    /// Residual and analytic Jacobian from one set of layer solves.
    pub fn residual_and_jacobian(
        &self,
        state: &WaveState,
        eps: f64,
    ) -> Result<(Residual, DMatrix<f64>), SystemError> {
        let ev = self.evaluate(state)?;
        let res = self.assemble_residual(state, eps, &ev)?;
        let jac = self.analytic_jacobian(state, eps, &ev)?;
        Ok((res, jac))
    }

    pub fn jacobian(
        &self,
        state: &WaveState,
        eps: f64,
        mode: JacobianMode,
    ) -> Result<DMatrix<f64>, SystemError> {
        match mode {
            JacobianMode::Analytic => {
                let ev = self.evaluate(state)?;
                self.analytic_jacobian(state, eps, &ev)
            }
            JacobianMode::FiniteDifference => self.fd_jacobian(state, eps),
        }
    }

    fn fd_jacobian(&self, state: &WaveState, eps: f64) -> Result<DMatrix<f64>, SystemError> {
        let x = state.pack();
        let n = x.len();
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let rp = self.residual(&WaveState::unpack(&self.grid, &xp)?, eps)?.pack();
            let rm = self.residual(&WaveState::unpack(&self.grid, &xm)?, eps)?.pack();
            jac.set_column(i, &((rp - rm) / (2.0 * h)));
        }
        Ok(jac)
    }

    fn analytic_jacobian(
        &self,
        state: &WaveState,
        eps: f64,
        ev: &Evaluation,
    ) -> Result<DMatrix<f64>, SystemError> {
        let p = &self.params;
        let n1 = self.grid.n_coeffs();
        let dx = self.grid.dx_matrix();
        let dxx = self.grid.dxx_matrix();
        let an = self.grid.analysis_matrix();
        let syn = self.grid.synthesis_matrix();
        let c = state.c;
        let t = &ev.traces;
        let v = self.velocities(ev, eps);

        let lower: LayerLinearization = ev.lower.linearize(Some(p.pair.lower()))?;
        let upper: LayerLinearization = ev.upper.linearize(None)?;
        let probe = lower.probe.as_ref().expect("probe requested");

        let diag = |f: &dyn Fn(usize) -> f64| DMatrix::from_diagonal(&DVector::from_fn(n1, |j, _| f(j)));
        let q = DVector::from_fn(n1, |j, _| 1.0 + ev.ex[j] * ev.ex[j]);
        let inv_q = diag(&|j| 1.0 / q[j]);
        let ex = diag(&|j| ev.ex[j]);

        // sensitivities of the squared-speed and transport terms
        let a_y = diag(&|j| -(c * p.rho + p.rho * v.uy[j]));
        let a_x = diag(&|j| -p.rho * v.ux[j]);
        let b_y = diag(&|j| c * p.rho_bar + p.rho_bar * v.uby[j]);
        let b_x = diag(&|j| p.rho_bar * v.ubx[j]);

        let gx = &lower.dno_trace;
        let gbx = &upper.dno_trace;
        let f1_xi = &a_y * &inv_q * (gx + &ex * dx) + &a_x * &inv_q * (dx - &ex * gx);
        let f1_xib = &b_y * &inv_q * (&ex * dx - gbx) + &b_x * &inv_q * (dx + &ex * gbx);

        let ge = &lower.dno_eta;
        let gbe = &upper.dno_eta;
        let d_uy = &inv_q * (ge + diag(&|j| ev.xx[j] - 2.0 * ev.ex[j] * v.vy[j]) * dx)
            + diag(&|j| eps * t.phi_yy[j]);
        let d_ux = &inv_q * (-(&ex * ge) + diag(&|j| -ev.g[j] - 2.0 * ev.ex[j] * v.vx[j]) * dx)
            + diag(&|j| eps * t.phi_xy[j]);
        let d_uby = &inv_q * (-gbe + diag(&|j| ev.xbx[j] - 2.0 * ev.ex[j] * v.vby[j]) * dx)
            - diag(&|j| eps * t.phi_yy[j]);
        let d_ubx = &inv_q * (&ex * gbe + diag(&|j| ev.gb[j] - 2.0 * ev.ex[j] * v.vbx[j]) * dx)
            - diag(&|j| eps * t.phi_xy[j]);
        let f1_eta_transport = &a_y * d_uy + &a_x * d_ux + &b_y * d_uby + &b_x * d_ubx;
        let f1_eta_static = DMatrix::identity(n1, n1) * ((p.rho_bar - p.rho) * p.g)
            + diag(&|j| p.sigma / q[j].powf(1.5)) * dxx
            - diag(&|j| 3.0 * p.sigma * ev.exx[j] * ev.ex[j] / q[j].powf(2.5)) * dx;
        let f1_c = DVector::from_fn(n1, |j, _| p.rho_bar * v.uby[j] - p.rho * v.uy[j]);

        // transport rows pass through the optional 2/3 truncation
        let project_transport = |m: DMatrix<f64>| -> DMatrix<f64> {
            let mut out = an * m;
            if let Some(cut) = self.dealias_mask() {
                for k in cut + 1..n1 {
                    out.row_mut(k).fill(0.0);
                }
            }
            out
        };

        let dim = 3 * n1 + 1;
        let mut jac = DMatrix::zeros(dim, dim);
        let mut put = |r: usize, col: usize, m: DMatrix<f64>| {
            jac.view_mut((r * n1, col * n1), (n1, n1)).copy_from(&(m * syn));
        };
        put(0, 0, project_transport(f1_eta_transport) + an * f1_eta_static);
        put(0, 1, project_transport(f1_xib));
        put(0, 2, project_transport(f1_xi));
        put(1, 0, an * diag(&|j| c - eps * t.phi_y[j]));
        put(1, 1, an.clone());
        put(2, 0, an * diag(&|j| c + eps * t.phi_y[j]));
        put(2, 2, an.clone());

        let col_c = {
            let mut f1c = an * DMatrix::from_column_slice(n1, 1, f1_c.as_slice());
            if let Some(cut) = self.dealias_mask() {
                for k in cut + 1..n1 {
                    f1c[(k, 0)] = 0.0;
                }
            }
            f1c
        };
        jac.view_mut((0, 3 * n1), (n1, 1)).copy_from(&col_c);
        let eta_coeffs = DVector::from_column_slice(state.eta.coeffs());
        jac.view_mut((n1, 3 * n1), (n1, 1)).copy_from(&eta_coeffs);
        jac.view_mut((2 * n1, 3 * n1), (n1, 1)).copy_from(&eta_coeffs);
        let f4_eta = syn.tr_mul(&probe.eta);
        let f4_xi = syn.tr_mul(&probe.trace);
        for k in 0..n1 {
            jac[(3 * n1, k)] = f4_eta[k];
            jac[(3 * n1, 2 * n1 + k)] = f4_xi[k];
        }
        jac[(3 * n1, 3 * n1)] = 1.0;

        if jac.iter().any(|x| !x.is_finite()) {
            return Err(SystemError::NonFiniteEntry("jacobian"));
        }
        Ok(jac)
    }

    /// Analytic derivative of the residual with respect to the vortex strength.
    pub fn d_eps(&self, state: &WaveState, eps: f64) -> Result<Residual, SystemError> {
        let ev = self.evaluate(state)?;
        Ok(self.d_eps_from(state, eps, &ev))
    }

    fn d_eps_from(&self, state: &WaveState, eps: f64, ev: &Evaluation) -> Residual {
        let p = &self.params;
        let v = self.velocities(ev, eps);
        let t = &ev.traces;
        let n = ev.eta.len();
        let c = state.c;
        let r1 = DVector::from_fn(n, |j, _| {
            -c * (p.rho_bar + p.rho) * t.phi_y[j]
                - p.rho_bar * (v.uby[j] * t.phi_y[j] + v.ubx[j] * t.phi_x[j])
                - p.rho * (v.uy[j] * t.phi_y[j] + v.ux[j] * t.phi_x[j])
        });
        let mut r1 = self.to_field(&r1);
        if self.disc.dealias {
            r1 = r1.dealiased();
        }
        let phi = DVector::from_column_slice(&t.phi);
        Residual {
            r1,
            r2: self.to_field(&(-&phi)),
            r3: self.to_field(&phi),
            r4: -self.c1,
        }
    }

    /// Residual, Jacobian and strength derivative from one evaluation.
    pub fn linearize(
        &self,
        state: &WaveState,
        eps: f64,
    ) -> Result<(Residual, DMatrix<f64>, Residual), SystemError> {
        let ev = self.evaluate(state)?;
        let res = self.assemble_residual(state, eps, &ev)?;
        let jac = self.analytic_jacobian(state, eps, &ev)?;
        let de = self.d_eps_from(state, eps, &ev);
        Ok((res, jac, de))
    }

    /// `(H(0) cos(k pi x / L))_y` at the lower vortex, or `1/d` for `k = 0`.
    pub fn flat_probe_multiplier(&self, k: usize) -> f64 {
        let d = self.params.depth;
        let z = self.params.pair.lower();
        let kap = self.grid.wavenumber(k);
        if k == 0 {
            1.0 / d
        } else {
            kap * (kap * z.x).cos() * (kap * (z.y + d)).cosh() / (kap * d).sinh()
        }
    }

    /// Closed-form Jacobian at the flat state with `eps = 0`, built from
    /// Fourier multipliers only.
    pub fn flat_linearization(&self) -> DMatrix<f64> {
        let n1 = self.grid.n_coeffs();
        let dim = 3 * n1 + 1;
        let mut jac = DMatrix::zeros(dim, dim);
        for k in 0..n1 {
            jac[(k, k)] = self.params.flat_multiplier(self.grid.wavenumber(k));
            jac[(n1 + k, n1 + k)] = 1.0;
            jac[(2 * n1 + k, 2 * n1 + k)] = 1.0;
            jac[(3 * n1, 2 * n1 + k)] = self.flat_probe_multiplier(k);
        }
        jac[(3 * n1, 3 * n1)] = 1.0;
        jac
    }

    /// `(H(eta) xi)_x(z) + eps * (phi_H)_x(z)`: the horizontal velocity at
    /// the lower vortex, which vanishes for states symmetric about `x = 0`.
    pub fn vortex_drift(&self, state: &WaveState, eps: f64) -> Result<f64, SystemError> {
        let geom = self.geometry(Layer::Lower, &state.eta)?;
        let sol = crate::layer::solve_layer(&self.layers, &geom, &state.xi)?;
        let z = self.params.pair.lower();
        let induced = self.kernel.grad(z - self.params.pair.upper())?.0;
        Ok(sol.eval_dx(z)? + eps * induced)
    }

    pub fn diagnostics(&self, state: &WaveState) -> StateDiagnostics {
        let eta = &state.eta;
        let lower = LayerGeometry::new(Layer::Lower, self.params.depth, eta.clone(), &self.grid, 0.0);
        let upper = LayerGeometry::new(Layer::Upper, self.params.depth, eta.clone(), &self.grid, 0.0);
        let min_gap = match (lower, upper) {
            (Ok(l), Ok(u)) => l.min_gap(&self.grid).min(u.min_gap(&self.grid)),
            _ => 0.0,
        };
        StateDiagnostics {
            eta_sup: eta.sup_norm(&self.grid),
            eta_sobolev: eta.sobolev_norm(&self.grid, SOBOLEV_INDEX),
            eta_at_zero: eta.eval(&self.grid, 0.0),
            min_vortex_distance: vortex::min_vortex_distance(eta, &self.params.pair, &self.kernel, &self.grid),
            min_gap,
        }
    }

    /// Blow-up norm of `(state, eps)` with `H^3` field norms.
    pub fn state_norm(&self, state: &WaveState, eps: f64) -> f64 {
        state.norm_with(eps, &self.grid, SOBOLEV_INDEX)
    }

    /// Vortex stream function traces along the interface of `state`.
    pub fn vortex_traces(&self, state: &WaveState) -> Result<VortexTraces, SystemError> {
        Ok(vortex_traces(
            &state.eta,
            &self.params.pair,
            &self.kernel,
            &self.grid,
            self.disc.delta_guard,
        )?)
    }

    /// Lower vortex position.
    pub fn vortex(&self) -> Point {
        self.params.pair.lower()
    }
}
