//! Harmonic extension and Dirichlet–Neumann operators on the two periodic
//! strips bounded by the interface and a rigid wall.
//!
//! Each layer is mapped to `[0, L] x [0, 1]` through `y = w + s h(x)`, where
//! `w = -d` (lower) or `w = d` (upper) is the wall and `h = eta - w`. The
//! interface sits at `s = 1` and the wall at `s = 0`. In these coordinates
//! the Laplacian becomes
//!
//! `h^2 u_xx - 2 s h h' u_xs + (1 + s^2 h'^2) u_ss + s (2 h'^2 - h h'') u_s`
//!
//! The wall carries the gauge `u = 0`. The trace is first extended by the
//! exact flat-strip profiles `sinh(kappa d s) / sinh(kappa d)` mode by mode;
//! the remainder vanishes on both boundaries and is collocated on the half
//! grid in `x` (cosine basis) times Chebyshev–Gauss–Lobatto nodes in `s`.
//! Flat strips are therefore reproduced exactly at any vertical resolution.
//! The remainder is solved with right-preconditioned GMRES, the
//! preconditioner being the exact inverse for a flat strip of the mean
//! thickness. A dense LU path is kept as fallback and reference.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chebyshev::Chebyshev;
use crate::error::LayerError;
use crate::krylov::{gmres_batch, GmresSettings};
use crate::spectral::{CollocationGrid, EvenField};
use crate::vortex::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Lower,
    Upper,
}

impl Layer {
    /// `+1` for the lower layer, `-1` for the upper one (orientation of the
    /// outward normal on the interface).
    pub fn sign(self) -> f64 {
        match self {
            Layer::Lower => 1.0,
            Layer::Upper => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSettings {
    /// Chebyshev degree `M` in the mapped vertical coordinate.
    pub vertical: usize,
    /// Minimum admissible layer thickness.
    pub gap_floor: f64,
    /// Clearance required for interior point evaluation.
    pub point_guard: f64,
    pub gmres: GmresSettings,
}

impl Default for LayerSettings {
    fn default() -> Self {
        Self {
            vertical: 32,
            gap_floor: 0.02,
            point_guard: 0.05,
            gmres: GmresSettings::default(),
        }
    }
}

#[derive(Debug)]
struct DiscInner {
    grid: CollocationGrid,
    cheb: Chebyshev,
    settings: LayerSettings,
    /// Interior nodes `s_1..s_{M-1}`.
    s_int: Vec<f64>,
    ds_ii: DMatrix<f64>,
    ds_ii_t: DMatrix<f64>,
    dss_ii: DMatrix<f64>,
    dss_ii_t: DMatrix<f64>,
    /// `Ds[0, 1..M-1]`: interior contributions to `u_s` on the interface.
    ds_0i: DVector<f64>,
    dx: DMatrix<f64>,
    dx_t: DMatrix<f64>,
    dxx: DMatrix<f64>,
    dxx_t: DMatrix<f64>,
    analysis: DMatrix<f64>,
    analysis_t: DMatrix<f64>,
    synthesis: DMatrix<f64>,
    synthesis_t: DMatrix<f64>,
}

/// Grid, vertical collocation and solver settings shared by all layer solves.
#[derive(Debug, Clone)]
pub struct LayerDiscretization {
    inner: Arc<DiscInner>,
}

impl LayerDiscretization {
    pub fn new(grid: &CollocationGrid, settings: LayerSettings) -> Result<Self, LayerError> {
        let m = settings.vertical;
        if m < 8 {
            return Err(LayerError::InvalidResolution(format!(
                "vertical resolution must be at least 8, got {m}"
            )));
        }
        if !(settings.gap_floor > 0.0) || !(settings.point_guard > 0.0) {
            return Err(LayerError::InvalidResolution(
                "gap floor and point guard must be positive".into(),
            ));
        }
        let cheb = Chebyshev::new(m);
        let mi = m - 1;
        let ds_ii = cheb.ds().view((1, 1), (mi, mi)).into_owned();
        let dss_ii = cheb.dss().view((1, 1), (mi, mi)).into_owned();
        let ds_0i = cheb.ds().view((0, 1), (1, mi)).row(0).transpose();
        let s_int = cheb.nodes()[1..m].to_vec();
        let dx = grid.dx_matrix().clone();
        let dxx = grid.dxx_matrix().clone();
        let analysis = grid.analysis_matrix().clone();
        let synthesis = grid.synthesis_matrix().clone();
        Ok(Self {
            inner: Arc::new(DiscInner {
                grid: grid.clone(),
                settings,
                s_int,
                ds_ii_t: ds_ii.transpose(),
                ds_ii,
                dss_ii_t: dss_ii.transpose(),
                dss_ii,
                ds_0i,
                dx_t: dx.transpose(),
                dx,
                dxx_t: dxx.transpose(),
                dxx,
                analysis_t: analysis.transpose(),
                analysis,
                synthesis_t: synthesis.transpose(),
                synthesis,
                cheb,
            }),
        })
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.inner.grid
    }

    pub fn settings(&self) -> &LayerSettings {
        &self.inner.settings
    }

    pub fn chebyshev(&self) -> &Chebyshev {
        &self.inner.cheb
    }

    /// `cos(kappa_k x0)` and its `x`-derivative, per mode.
    fn x_modes(&self, x0: f64) -> (DVector<f64>, DVector<f64>) {
        let g = &self.inner.grid;
        let n1 = g.n_coeffs();
        let cos = DVector::from_fn(n1, |k, _| (g.wavenumber(k) * x0).cos());
        let dcos = DVector::from_fn(n1, |k, _| -g.wavenumber(k) * (g.wavenumber(k) * x0).sin());
        (cos, dcos)
    }
}

/// One layer of the strip: which side of the interface, the wall distance
/// and the interface elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGeometry {
    which: Layer,
    depth: f64,
    eta: EvenField,
}

impl LayerGeometry {
    /// Checks that the strip keeps a thickness of at least `gap_floor`.
    pub fn new(
        which: Layer,
        depth: f64,
        eta: EvenField,
        grid: &CollocationGrid,
        gap_floor: f64,
    ) -> Result<Self, LayerError> {
        if eta.coeffs().len() != grid.n_coeffs() {
            return Err(LayerError::InvalidResolution(format!(
                "interface has {} coefficients, grid expects {}",
                eta.coeffs().len(),
                grid.n_coeffs()
            )));
        }
        let geom = Self { which, depth, eta };
        let gap = geom.min_gap(grid);
        if !(gap >= gap_floor) {
            return Err(LayerError::DegenerateStrip {
                gap,
                floor: gap_floor,
            });
        }
        Ok(geom)
    }

    pub fn which(&self) -> Layer {
        self.which
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn eta(&self) -> &EvenField {
        &self.eta
    }

    /// Wall height: `-d` for the lower layer, `d` for the upper.
    pub fn wall(&self) -> f64 {
        -self.which.sign() * self.depth
    }

    /// Smallest nodal thickness of the strip.
    pub fn min_gap(&self, grid: &CollocationGrid) -> f64 {
        let w = self.wall();
        self.eta
            .half_values(grid)
            .iter()
            .map(|e| (e - w).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The collocated mapped Laplacian for one geometry.
#[derive(Debug)]
pub struct LayerOperator {
    disc: LayerDiscretization,
    geometry: LayerGeometry,
    h: DVector<f64>,
    hx: DVector<f64>,
    hxx: DVector<f64>,
    cxx: DMatrix<f64>,
    cxs: DMatrix<f64>,
    css: DMatrix<f64>,
    cs: DMatrix<f64>,
    /// Flat profiles `P_k(s_i)`, `P_k'(s_i)`, `P_k''(s_i)` (mode by node).
    profile: [DMatrix<f64>; 3],
    /// Nodal trace -> nodal `u_s` of the flat extension on the interface.
    flat_us: DMatrix<f64>,
    precond: Vec<DMatrix<f64>>,
    precond_t: Vec<DMatrix<f64>>,
}

impl LayerOperator {
    pub fn new(disc: &LayerDiscretization, geometry: LayerGeometry) -> Result<Self, LayerError> {
        let d = &disc.inner;
        let grid = &d.grid;
        if geometry.eta.coeffs().len() != grid.n_coeffs() {
            return Err(LayerError::InvalidResolution(
                "interface resolution does not match the discretization".into(),
            ));
        }
        let gap = geometry.min_gap(grid);
        if !(gap >= d.settings.gap_floor) {
            return Err(LayerError::DegenerateStrip {
                gap,
                floor: d.settings.gap_floor,
            });
        }
        let nx = grid.n_coeffs();
        let mi = d.s_int.len();
        let w = geometry.wall();
        let eta_nodal = DVector::from_vec(geometry.eta.half_values(grid));
        let h = eta_nodal.map(|e| e - w);
        let hx = &d.dx * &eta_nodal;
        let hxx = &d.dxx * &eta_nodal;
        let s = &d.s_int;
        let cxx = DMatrix::from_fn(nx, mi, |j, _| h[j] * h[j]);
        let cxs = DMatrix::from_fn(nx, mi, |j, i| -2.0 * s[i] * h[j] * hx[j]);
        let css = DMatrix::from_fn(nx, mi, |j, i| 1.0 + (s[i] * hx[j]).powi(2));
        let cs = DMatrix::from_fn(nx, mi, |j, i| {
            s[i] * (2.0 * hx[j] * hx[j] - h[j] * hxx[j])
        });
        let nodes = d.cheb.nodes();
        let mut profile = [
            DMatrix::zeros(nx, nodes.len()),
            DMatrix::zeros(nx, nodes.len()),
            DMatrix::zeros(nx, nodes.len()),
        ];
        for k in 0..nx {
            let a = grid.wavenumber(k) * geometry.depth;
            for (i, &si) in nodes.iter().enumerate() {
                let [p0, p1, p2] = flat_profile(a, si);
                profile[0][(k, i)] = p0;
                profile[1][(k, i)] = p1;
                profile[2][(k, i)] = p2;
            }
            profile[0][(k, 0)] = 1.0;
            profile[0][(k, nodes.len() - 1)] = 0.0;
        }
        let flat_us = &d.synthesis
            * DMatrix::from_diagonal(&profile[1].column(0).into_owned())
            * &d.analysis;

        let hbar = geometry.eta.coeffs()[0] - w;
        let mut precond = Vec::with_capacity(nx);
        for k in 0..nx {
            let shift = (hbar * grid.wavenumber(k)).powi(2);
            let mut block = d.dss_ii.clone();
            for i in 0..mi {
                block[(i, i)] -= shift;
            }
            let inv = block.try_inverse().ok_or_else(|| {
                LayerError::LinearSolveFailure(format!("flat preconditioner singular at mode {k}"))
            })?;
            precond.push(inv);
        }
        let precond_t = precond.iter().map(|p| p.transpose()).collect();
        Ok(Self {
            disc: disc.clone(),
            geometry,
            h,
            hx,
            hxx,
            cxx,
            cxs,
            css,
            cs,
            profile,
            flat_us,
            precond,
            precond_t,
        })
    }

    pub fn geometry(&self) -> &LayerGeometry {
        &self.geometry
    }

    pub fn discretization(&self) -> &LayerDiscretization {
        &self.disc
    }

    fn shape(&self) -> (usize, usize) {
        self.cxx.shape()
    }

    /// Mapped Laplacian on interior unknowns with zero boundary data.
    fn apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let d = &self.disc.inner;
        let w_ds = w * &d.ds_ii_t;
        let mut out = self.cxx.component_mul(&(&d.dxx * w));
        out += self.cxs.component_mul(&(&d.dx * &w_ds));
        out += self.css.component_mul(&(w * &d.dss_ii_t));
        out += self.cs.component_mul(&w_ds);
        out
    }

    fn apply_transpose(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let d = &self.disc.inner;
        let mut out = &d.dxx_t * self.cxx.component_mul(z);
        out += &d.dx_t * self.cxs.component_mul(z) * &d.ds_ii;
        out += self.css.component_mul(z) * &d.dss_ii;
        out += self.cs.component_mul(z) * &d.ds_ii;
        out
    }

    fn precondition(&self, r: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
        let d = &self.disc.inner;
        let (first, last, blocks) = if transpose {
            (&d.synthesis_t, &d.analysis_t, &self.precond_t)
        } else {
            (&d.analysis, &d.synthesis, &self.precond)
        };
        let mut x = first * r;
        for (k, inv) in blocks.iter().enumerate() {
            let row = x.row(k).transpose();
            x.set_row(k, &(inv * row).transpose());
        }
        last * x
    }

    /// Nodal `(U, U_s, U_ss)` of the flat extension with cosine coefficients `a`.
    fn flat_fields(&self, a: &DVector<f64>) -> [DMatrix<f64>; 3] {
        let syn = &self.disc.inner.synthesis;
        let scaled = |p: &DMatrix<f64>| {
            let mut out = p.clone();
            for (k, ak) in a.iter().enumerate() {
                out.row_mut(k).scale_mut(*ak);
            }
            syn * out
        };
        [
            scaled(&self.profile[0]),
            scaled(&self.profile[1]),
            scaled(&self.profile[2]),
        ]
    }

    /// Mapped Laplacian of the flat extension at the interior nodes, so that
    /// the remainder solves `A W = -lift(trace)`.
    fn lift(&self, trace: &DVector<f64>) -> DMatrix<f64> {
        let d = &self.disc.inner;
        let (nx, mi) = self.shape();
        let a = &d.analysis * trace;
        let [u, us, uss] = self.flat_fields(&a);
        let interior = |m: DMatrix<f64>| m.columns(1, mi).into_owned();
        let mut out = self.cxx.component_mul(&interior(&d.dxx * u));
        out += self.cxs.component_mul(&interior(&d.dx * &us));
        out += self.css.component_mul(&interior(uss));
        out += self.cs.component_mul(&interior(us));
        debug_assert_eq!(out.shape(), (nx, mi));
        out
    }

    fn lift_transpose(&self, z: &DMatrix<f64>) -> DVector<f64> {
        let d = &self.disc.inner;
        let mi = self.shape().1;
        let prof = |t: usize| self.profile[t].columns(1, mi);
        let contract = |y: DMatrix<f64>, t: usize| row_sums(&y.component_mul(&prof(t)));
        let ga = contract(&d.synthesis_t * &d.dxx_t * self.cxx.component_mul(z), 0)
            + contract(&d.synthesis_t * &d.dx_t * self.cxs.component_mul(z), 1)
            + contract(&d.synthesis_t * self.css.component_mul(z), 2)
            + contract(&d.synthesis_t * self.cs.component_mul(z), 1);
        &d.analysis_t * ga
    }

    /// Solves `A W_c = R_c` (or `A^T W_c = R_c`) for a batch of right-hand sides.
    fn solve_batch(
        &self,
        rhs: &[DMatrix<f64>],
        transpose: bool,
    ) -> Result<Vec<DMatrix<f64>>, LayerError> {
        let (nx, mi) = self.shape();
        let vecs: Vec<DVector<f64>> = rhs
            .iter()
            .map(|r| DVector::from_column_slice(r.as_slice()))
            .collect();
        let as_mat = |v: &DVector<f64>| DMatrix::from_column_slice(nx, mi, v.as_slice());
        let op = |vs: &[&DVector<f64>]| -> Vec<DVector<f64>> {
            vs.iter()
                .map(|v| {
                    let y = self.precondition(&as_mat(v), transpose);
                    let ay = if transpose {
                        self.apply_transpose(&y)
                    } else {
                        self.apply(&y)
                    };
                    DVector::from_column_slice(ay.as_slice())
                })
                .collect()
        };
        match gmres_batch(op, &vecs, &self.disc.inner.settings.gmres) {
            Ok((ys, _)) => Ok(ys
                .iter()
                .map(|y| self.precondition(&as_mat(y), transpose))
                .collect()),
            Err(_) => self.solve_batch_dense(rhs, transpose),
        }
    }

    fn solve_batch_dense(
        &self,
        rhs: &[DMatrix<f64>],
        transpose: bool,
    ) -> Result<Vec<DMatrix<f64>>, LayerError> {
        let (nx, mi) = self.shape();
        let mut a = self.dense_matrix();
        if transpose {
            a.transpose_mut();
        }
        let lu = a.lu();
        rhs.iter()
            .map(|r| {
                let b = DVector::from_column_slice(r.as_slice());
                let x = lu.solve(&b).ok_or_else(|| {
                    LayerError::LinearSolveFailure("collocation matrix is singular".into())
                })?;
                if x.iter().all(|v| v.is_finite()) {
                    Ok(DMatrix::from_column_slice(nx, mi, x.as_slice()))
                } else {
                    Err(LayerError::LinearSolveFailure(
                        "collocation solve produced non-finite values".into(),
                    ))
                }
            })
            .collect()
    }

    /// The collocation matrix acting on column-major interior unknowns.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let d = &self.disc.inner;
        let (nx, mi) = self.shape();
        let n = nx * mi;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..mi {
            for j in 0..nx {
                let row = j + nx * i;
                for jp in 0..nx {
                    a[(row, jp + nx * i)] += self.cxx[(j, i)] * d.dxx[(j, jp)];
                }
                for ip in 0..mi {
                    let dsv = d.ds_ii[(i, ip)];
                    for jp in 0..nx {
                        a[(row, jp + nx * ip)] += self.cxs[(j, i)] * dsv * d.dx[(j, jp)];
                    }
                    a[(row, j + nx * ip)] +=
                        self.css[(j, i)] * d.dss_ii[(i, ip)] + self.cs[(j, i)] * dsv;
                }
            }
        }
        a
    }

    fn assemble(self: &Arc<Self>, trace: DVector<f64>, interior: &DMatrix<f64>) -> LayerSolution {
        let d = &self.disc.inner;
        let (nx, mi) = self.shape();
        let coeffs = &d.analysis * &trace;
        let mut rem = DMatrix::zeros(nx, mi + 2);
        rem.view_mut((0, 1), (nx, mi)).copy_from(interior);
        let [u, us, uss] = self.flat_fields(&coeffs);
        LayerSolution {
            u: u + &rem,
            us: us + &rem * d.cheb.ds().transpose(),
            uss: uss + &rem * d.cheb.dss().transpose(),
            op: Arc::clone(self),
            trace,
            coeffs,
            rem,
        }
    }

    /// Harmonic extension of nodal trace values on the half grid.
    pub fn solve(self: &Arc<Self>, trace: &[f64]) -> Result<LayerSolution, LayerError> {
        let t = self.check_trace(trace)?;
        let w = self.solve_batch(&[-self.lift(&t)], false)?.remove(0);
        Ok(self.assemble(t, &w))
    }

    /// As [`LayerOperator::solve`] but through the dense LU factorization.
    pub fn solve_dense(self: &Arc<Self>, trace: &[f64]) -> Result<LayerSolution, LayerError> {
        let t = self.check_trace(trace)?;
        let w = self.solve_batch_dense(&[-self.lift(&t)], false)?.remove(0);
        Ok(self.assemble(t, &w))
    }

    fn check_trace(&self, trace: &[f64]) -> Result<DVector<f64>, LayerError> {
        let nx = self.shape().0;
        if trace.len() != nx {
            return Err(LayerError::InvalidResolution(format!(
                "trace has {} nodal values, expected {nx}",
                trace.len()
            )));
        }
        Ok(DVector::from_column_slice(trace))
    }
}

/// `sinh(a s) / sinh(a)` and its first two `s`-derivatives (`s` for `a = 0`),
/// evaluated without overflow for large `a`.
fn flat_profile(a: f64, s: f64) -> [f64; 3] {
    if a == 0.0 {
        return [s, 1.0, 0.0];
    }
    let p = if a < 20.0 {
        [(a * s).sinh() / a.sinh(), a * (a * s).cosh() / a.sinh()]
    } else {
        let decay = (-a * (1.0 - s)).exp();
        let tail = (-2.0 * a * s).exp();
        let norm = 1.0 - (-2.0 * a).exp();
        [decay * (1.0 - tail) / norm, a * decay * (1.0 + tail) / norm]
    };
    [p[0], p[1], a * a * p[0]]
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |j, _| m.row(j).sum())
}

/// Linear response of the interface DNO (nodal to nodal) to the trace and to
/// the interface elevation, plus optionally that of one interior `phi_y` probe.
#[derive(Debug, Clone)]
pub struct LayerLinearization {
    pub dno_trace: DMatrix<f64>,
    pub dno_eta: DMatrix<f64>,
    pub probe: Option<ProbeLinearization>,
}

#[derive(Debug, Clone)]
pub struct ProbeLinearization {
    pub value: f64,
    pub trace: DVector<f64>,
    pub eta: DVector<f64>,
}

/// Mapped-coordinate probe data for one interior point.
struct Probe {
    /// Half-grid interpolation weights for `f(x0)` and `f'(x0)`.
    cx: DVector<f64>,
    cxd: DVector<f64>,
    /// `cos(kappa_k x0)` and its derivative.
    cos: DVector<f64>,
    dcos: DVector<f64>,
    /// Chebyshev weights for value, first and second `s`-derivative at `s0`.
    sw: DVector<f64>,
    dsw: DVector<f64>,
    dssw: DVector<f64>,
    /// Flat profiles and derivatives at `s0`, per mode.
    prof: [DVector<f64>; 3],
    s0: f64,
    h0: f64,
    hx0: f64,
}

/// Harmonic extension of one trace. Nodal arrays are indexed by half-grid
/// node and Chebyshev node, column 0 being the interface and the last
/// column the wall.
#[derive(Debug, Clone)]
pub struct LayerSolution {
    op: Arc<LayerOperator>,
    trace: DVector<f64>,
    coeffs: DVector<f64>,
    /// Collocated remainder over the flat extension.
    rem: DMatrix<f64>,
    u: DMatrix<f64>,
    us: DMatrix<f64>,
    uss: DMatrix<f64>,
}

impl LayerSolution {
    pub fn operator(&self) -> &Arc<LayerOperator> {
        &self.op
    }

    pub fn geometry(&self) -> &LayerGeometry {
        &self.op.geometry
    }

    /// Nodal values `u(x_j, s_i)`.
    pub fn nodal(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn trace(&self) -> &DVector<f64> {
        &self.trace
    }

    /// Nodal DNO values: `phi_y - eta_x phi_x` (lower) or
    /// `eta_x phi_x - phi_y` (upper) on the interface.
    pub fn dno_nodal(&self) -> DVector<f64> {
        let d = &self.op.disc.inner;
        let sign = self.op.geometry.which.sign();
        let us = self.us.column(0);
        let tx = &d.dx * &self.trace;
        DVector::from_fn(us.len(), |j, _| {
            let q = 1.0 + self.op.hx[j].powi(2);
            sign * (q * us[j] / self.op.h[j] - self.op.hx[j] * tx[j])
        })
    }

    pub fn dno(&self) -> EvenField {
        EvenField::from_half_values(self.op.disc.grid(), self.dno_nodal().as_slice())
    }

    fn probe(&self, p: Point) -> Result<Probe, LayerError> {
        let disc = &self.op.disc;
        let d = &disc.inner;
        let guard = d.settings.point_guard;
        let geom = &self.op.geometry;
        let grid = disc.grid();
        let eta0 = geom.eta.eval(grid, p.x);
        let w = geom.wall();
        let h0 = eta0 - w;
        let s0 = (p.y - w) / h0;
        let clear = (p.y - eta0).abs().min((p.y - w).abs());
        if !(s0 > 0.0 && s0 < 1.0) || !(clear > guard) {
            return Err(LayerError::PointOutsideLayer {
                x: p.x,
                y: p.y,
                guard,
            });
        }
        let (cos, dcos) = disc.x_modes(p.x);
        let sw = DVector::from_vec(d.cheb.interpolation_weights(s0));
        let n1 = grid.n_coeffs();
        let mut prof = [DVector::zeros(n1), DVector::zeros(n1), DVector::zeros(n1)];
        for k in 0..n1 {
            let vals = flat_profile(grid.wavenumber(k) * geom.depth, s0);
            for t in 0..3 {
                prof[t][k] = vals[t];
            }
        }
        Ok(Probe {
            cx: &d.analysis_t * &cos,
            cxd: &d.analysis_t * &dcos,
            dsw: d.cheb.ds().tr_mul(&sw),
            dssw: d.cheb.dss().tr_mul(&sw),
            hx0: geom.eta.ddx(grid).eval(grid, p.x),
            cos,
            dcos,
            sw,
            prof,
            s0,
            h0,
        })
    }

    /// `u` (`t = 0`), `u_s` (`t = 1`) or `u_ss` (`t = 2`) at the probe.
    fn probe_value(&self, pr: &Probe, t: usize) -> f64 {
        let weights = [&pr.sw, &pr.dsw, &pr.dssw][t];
        pr.cos.component_mul(&pr.prof[t]).dot(&self.coeffs) + pr.cx.dot(&(&self.rem * weights))
    }

    /// `phi` at an interior point.
    pub fn eval(&self, p: Point) -> Result<f64, LayerError> {
        let pr = self.probe(p)?;
        Ok(self.probe_value(&pr, 0))
    }

    /// `phi_y` at an interior point.
    pub fn eval_dy(&self, p: Point) -> Result<f64, LayerError> {
        let pr = self.probe(p)?;
        Ok(self.probe_value(&pr, 1) / pr.h0)
    }

    /// `phi_x` at an interior point.
    pub fn eval_dx(&self, p: Point) -> Result<f64, LayerError> {
        let pr = self.probe(p)?;
        let ux = pr.dcos.component_mul(&pr.prof[0]).dot(&self.coeffs)
            + pr.cxd.dot(&(&self.rem * &pr.sw));
        Ok(ux - pr.s0 * pr.hx0 / pr.h0 * self.probe_value(&pr, 1))
    }

    /// Derivatives of the DNO (and of an optional `phi_y` probe) with respect
    /// to nodal trace values and nodal interface elevation.
    ///
    /// Uses one adjoint solve per output functional at the current geometry;
    /// the geometric part follows from the linearized mapped operator.
    pub fn linearize(&self, probe: Option<Point>) -> Result<LayerLinearization, LayerError> {
        let op = &self.op;
        let d = &op.disc.inner;
        let (nx, mi) = op.shape();
        let probe = probe.map(|p| self.probe(p)).transpose()?;

        let mut functionals = Vec::with_capacity(nx + 1);
        for j in 0..nx {
            let mut e = DMatrix::zeros(nx, mi);
            e.set_row(j, &d.ds_0i.transpose());
            functionals.push(e);
        }
        if let Some(pr) = &probe {
            let dsw_int = pr.dsw.rows(1, mi).transpose();
            functionals.push(&pr.cx * dsw_int);
        }
        let adjoints = op.solve_batch(&functionals, true)?;

        // coefficient sensitivities at the interior nodes
        let uxx = &d.dxx * &self.u;
        let uxs = &d.dx * &self.us;
        let (us, uss) = (&self.us, &self.uss);
        let s = &d.s_int;
        let at = |m: &DMatrix<f64>, j: usize, i: usize| m[(j, i + 1)];
        let (h, hx, hxx) = (&op.h, &op.hx, &op.hxx);
        let alpha = DMatrix::from_fn(nx, mi, |j, i| {
            2.0 * h[j] * at(&uxx, j, i)
                - 2.0 * s[i] * hx[j] * at(&uxs, j, i)
                - s[i] * hxx[j] * at(us, j, i)
        });
        let beta = DMatrix::from_fn(nx, mi, |j, i| {
            -2.0 * s[i] * h[j] * at(&uxs, j, i)
                + 2.0 * s[i] * s[i] * hx[j] * at(uss, j, i)
                + 4.0 * s[i] * hx[j] * at(us, j, i)
        });
        let gamma = DMatrix::from_fn(nx, mi, |j, i| -s[i] * h[j] * at(us, j, i));

        let shape_grad = |z: &DMatrix<f64>| -> DVector<f64> {
            let a = row_sums(&z.component_mul(&alpha));
            let b = row_sums(&z.component_mul(&beta));
            let g = row_sums(&z.component_mul(&gamma));
            -(a + &d.dx_t * b + &d.dxx_t * g)
        };

        let sign = op.geometry.which.sign();
        let us_if = self.us.column(0);
        let tx = &d.dx * &self.trace;
        let mut dno_trace = DMatrix::zeros(nx, nx);
        let mut dno_eta = DMatrix::zeros(nx, nx);
        for j in 0..nx {
            let z = &adjoints[j];
            let q = 1.0 + hx[j] * hx[j];
            let t_row = -op.lift_transpose(z);
            let e_row = shape_grad(z);
            for l in 0..nx {
                let vt = q / h[j] * (t_row[l] + op.flat_us[(j, l)]) - hx[j] * d.dx[(j, l)];
                let mut ve = q / h[j] * e_row[l]
                    + (2.0 * hx[j] * us_if[j] / h[j] - tx[j]) * d.dx[(j, l)];
                if l == j {
                    ve -= q * us_if[j] / (h[j] * h[j]);
                }
                dno_trace[(j, l)] = sign * vt;
                dno_eta[(j, l)] = sign * ve;
            }
        }

        let probe = probe.map(|pr| {
            let z = &adjoints[nx];
            let us0 = self.probe_value(&pr, 1);
            let uss0 = self.probe_value(&pr, 2);
            let flat = &d.analysis_t * pr.cos.component_mul(&pr.prof[1]);
            let trace = (flat - op.lift_transpose(z)) / pr.h0;
            let eta = shape_grad(z) / pr.h0
                - pr.cx.scale(uss0 * pr.s0 / (pr.h0 * pr.h0) + us0 / (pr.h0 * pr.h0));
            ProbeLinearization {
                value: us0 / pr.h0,
                trace,
                eta,
            }
        });

        Ok(LayerLinearization {
            dno_trace,
            dno_eta,
            probe,
        })
    }
}

fn operator_for(
    disc: &LayerDiscretization,
    geom: &LayerGeometry,
) -> Result<Arc<LayerOperator>, LayerError> {
    Ok(Arc::new(LayerOperator::new(disc, geom.clone())?))
}

/// Harmonic extension `H(eta) trace` in the given layer.
pub fn solve_layer(
    disc: &LayerDiscretization,
    geom: &LayerGeometry,
    trace: &EvenField,
) -> Result<LayerSolution, LayerError> {
    operator_for(disc, geom)?.solve(&trace.half_values(disc.grid()))
}

/// Dirichlet–Neumann operator `G(eta) trace`.
pub fn dno(
    disc: &LayerDiscretization,
    geom: &LayerGeometry,
    trace: &EvenField,
) -> Result<EvenField, LayerError> {
    Ok(solve_layer(disc, geom, trace)?.dno())
}

/// `phi_y` of the harmonic extension at an interior point.
pub fn eval_interior_dy(sol: &LayerSolution, p: Point) -> Result<f64, LayerError> {
    sol.eval_dy(p)
}

/// Output whose geometric sensitivity is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeTarget {
    Dno,
    InteriorDy(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeOutput {
    Field(EvenField),
    Value(f64),
}

/// Default base step for finite-difference shape derivatives, relative to `d`.
pub const SHAPE_STEP: f64 = 1e-6;

/// Directional derivative of the chosen output as `eta -> eta + t eta_dir`,
/// by central differences with step `step / max(1, |eta_dir|_inf)`.
pub fn shape_derivative_with_step(
    disc: &LayerDiscretization,
    geom: &LayerGeometry,
    trace: &EvenField,
    direction: &EvenField,
    target: ShapeTarget,
    step: f64,
) -> Result<ShapeOutput, LayerError> {
    let grid = disc.grid();
    let t = step / direction.sup_norm(grid).max(1.0);
    let floor = disc.settings().gap_floor;
    let side = |sgn: f64| -> Result<LayerSolution, LayerError> {
        let g = LayerGeometry::new(
            geom.which,
            geom.depth,
            geom.eta.axpy(sgn * t, direction),
            grid,
            floor,
        )?;
        solve_layer(disc, &g, trace)
    };
    let plus = side(1.0)?;
    let minus = side(-1.0)?;
    match target {
        ShapeTarget::Dno => {
            let diff = (plus.dno_nodal() - minus.dno_nodal()) / (2.0 * t);
            Ok(ShapeOutput::Field(EvenField::from_half_values(
                grid,
                diff.as_slice(),
            )))
        }
        ShapeTarget::InteriorDy(p) => Ok(ShapeOutput::Value(
            (plus.eval_dy(p)? - minus.eval_dy(p)?) / (2.0 * t),
        )),
    }
}

/// [`shape_derivative_with_step`] with base step `1e-6 d`.
pub fn shape_derivative(
    disc: &LayerDiscretization,
    geom: &LayerGeometry,
    trace: &EvenField,
    direction: &EvenField,
    target: ShapeTarget,
) -> Result<ShapeOutput, LayerError> {
    shape_derivative_with_step(disc, geom, trace, direction, target, SHAPE_STEP * geom.depth)
}
