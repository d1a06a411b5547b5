//! Even/odd trigonometric discretization of 2L-periodic functions.
//!
//! The collocation grid has `2N` equispaced nodes `x_j = -L + jL/N`. Even
//! fields are stored as cosine coefficients `a_0..a_N` and odd fields as sine
//! coefficients `b_1..b_N`. Because every field handled by the solver has a
//! definite parity, all nodal work happens on the half grid `x = jL/N`,
//! `j = 0..=N`, which carries exactly `N + 1` independent samples.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::SpectralError;

/// Relative odd-part (resp. even-part) energy tolerated by [`to_coeffs`].
pub const DEFAULT_TOL_PARITY: f64 = 1e-10;

#[derive(Debug)]
struct Tables {
    /// `cos(k pi j / N)`, rows `j`, columns `k`: even coefficients -> half-grid values.
    even_synthesis: DMatrix<f64>,
    /// Inverse of `even_synthesis` (a DCT-I).
    even_analysis: DMatrix<f64>,
    /// `sin(k pi j / N)` for `k = 1..=N`: odd coefficients -> half-grid values.
    odd_synthesis: DMatrix<f64>,
    /// DST-I on interior half-grid nodes; the Nyquist sine row is zero.
    odd_analysis: DMatrix<f64>,
    /// Nodal even -> nodal odd first derivative.
    dx: DMatrix<f64>,
    /// Nodal even -> nodal even second derivative.
    dxx: DMatrix<f64>,
}

/// Equispaced periodic grid on `[-L, L)` with `N` retained modes.
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    half_period: f64,
    n_modes: usize,
    tables: Arc<Tables>,
}

impl PartialEq for CollocationGrid {
    fn eq(&self, other: &Self) -> bool {
        self.half_period == other.half_period && self.n_modes == other.n_modes
    }
}

impl CollocationGrid {
    pub fn new(half_period: f64, n_modes: usize) -> Result<Self, SpectralError> {
        if !(half_period > 0.0) || !half_period.is_finite() {
            return Err(SpectralError::InvalidGrid(format!(
                "half period must be positive, got {half_period}"
            )));
        }
        if n_modes < 8 || n_modes % 2 != 0 {
            return Err(SpectralError::InvalidGrid(format!(
                "mode count must be even and at least 8, got {n_modes}"
            )));
        }
        Ok(Self {
            half_period,
            n_modes,
            tables: Arc::new(Tables::build(half_period, n_modes)),
        })
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of cosine coefficients, `N + 1`.
    pub fn n_coeffs(&self) -> usize {
        self.n_modes + 1
    }

    /// Wavenumber `k pi / L`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        k as f64 * PI / self.half_period
    }

    /// The `2N` nodes of one period.
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.n_modes;
        (0..2 * n)
            .map(|j| -self.half_period + j as f64 * self.half_period / n as f64)
            .collect()
    }

    /// The `N + 1` nodes `x_j = jL/N` of the half period `[0, L]`.
    pub fn half_nodes(&self) -> Vec<f64> {
        let n = self.n_modes;
        (0..=n)
            .map(|j| j as f64 * self.half_period / n as f64)
            .collect()
    }

    /// Quadrature weights on the half grid such that `sum w_j f(x_j)`
    /// integrates an even band-limited `f` over one full period.
    pub fn half_weights(&self) -> Vec<f64> {
        let n = self.n_modes;
        let h = 2.0 * self.half_period / (2 * n) as f64;
        (0..=n)
            .map(|j| if j == 0 || j == n { h } else { 2.0 * h })
            .collect()
    }

    /// Half-grid nodal first derivative (even values -> odd values).
    pub fn dx_matrix(&self) -> &DMatrix<f64> {
        &self.tables.dx
    }

    /// Half-grid nodal second derivative (even values -> even values).
    pub fn dxx_matrix(&self) -> &DMatrix<f64> {
        &self.tables.dxx
    }

    /// Cosine analysis matrix mapping half-grid values to coefficients.
    pub fn analysis_matrix(&self) -> &DMatrix<f64> {
        &self.tables.even_analysis
    }

    /// Cosine synthesis matrix mapping coefficients to half-grid values.
    pub fn synthesis_matrix(&self) -> &DMatrix<f64> {
        &self.tables.even_synthesis
    }

    fn full_to_half(&self, m: usize) -> usize {
        let n = self.n_modes as isize;
        let j = m as isize - n;
        j.unsigned_abs()
    }
}

impl Tables {
    fn build(half_period: f64, n: usize) -> Self {
        let np1 = n + 1;
        let theta = |j: usize, k: usize| PI * (j * k) as f64 / n as f64;
        let even_synthesis = DMatrix::from_fn(np1, np1, |j, k| theta(j, k).cos());
        let even_analysis = DMatrix::from_fn(np1, np1, |k, j| {
            let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
            let ck = if k == 0 || k == n { 1.0 } else { 2.0 };
            ck * wj * theta(j, k).cos() / n as f64
        });
        let odd_synthesis = DMatrix::from_fn(np1, n, |j, k| theta(j, k + 1).sin());
        let odd_analysis = DMatrix::from_fn(n, np1, |k, j| {
            if j == 0 || j == n || k + 1 == n {
                0.0
            } else {
                2.0 * theta(j, k + 1).sin() / n as f64
            }
        });
        let kappa = |k: usize| k as f64 * PI / half_period;
        // d/dx cos(kx) = -k sin(kx): take coefficients, scale, resynthesize.
        let neg_kappa = DMatrix::from_fn(n, np1, |r, k| if r + 1 == k { -kappa(k) } else { 0.0 });
        let dx = &odd_synthesis * (&neg_kappa * &even_analysis);
        let neg_kappa2 = DMatrix::from_diagonal(&DVector::from_fn(np1, |k, _| -kappa(k).powi(2)));
        let dxx = &even_synthesis * (&neg_kappa2 * &even_analysis);
        Self {
            even_synthesis,
            even_analysis,
            odd_synthesis,
            odd_analysis,
            dx,
            dxx,
        }
    }
}

/// Declared symmetry of a set of nodal samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// An even 2L-periodic function `a_0 + sum_k a_k cos(k pi x / L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvenField {
    coeffs: Vec<f64>,
}

/// An odd 2L-periodic function `sum_k b_k sin(k pi x / L)`, `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OddField {
    coeffs: Vec<f64>,
}

/// Result of [`to_coeffs`].
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralField {
    Even(EvenField),
    Odd(OddField),
}

/// Interpolates `2N` nodal samples by the trigonometric polynomial of the
/// declared parity.
pub fn to_coeffs(
    grid: &CollocationGrid,
    values: &[f64],
    parity: Parity,
    tol_parity: f64,
) -> Result<SpectralField, SpectralError> {
    let n = grid.n_modes;
    if values.len() != 2 * n {
        return Err(SpectralError::LengthMismatch {
            expected: 2 * n,
            got: values.len(),
        });
    }
    let mut even = vec![0.0; 2 * n];
    let mut odd = vec![0.0; 2 * n];
    for m in 0..2 * n {
        let mirror = (2 * n - m) % (2 * n);
        even[m] = 0.5 * (values[m] + values[mirror]);
        odd[m] = 0.5 * (values[m] - values[mirror]);
    }
    let total: f64 = values.iter().map(|v| v * v).sum();
    let (kept, rejected) = match parity {
        Parity::Even => (&even, &odd),
        Parity::Odd => (&odd, &even),
    };
    let bad: f64 = rejected.iter().map(|v| v * v).sum();
    if bad > tol_parity * total {
        return Err(SpectralError::ParityViolation {
            ratio: bad / total,
            tol: tol_parity,
        });
    }
    let half: Vec<f64> = (0..=n).map(|j| kept[(n + j) % (2 * n)]).collect();
    Ok(match parity {
        Parity::Even => SpectralField::Even(EvenField::from_half_values(grid, &half)),
        Parity::Odd => SpectralField::Odd(OddField::from_half_values(grid, &half)),
    })
}

impl EvenField {
    pub fn zeros(grid: &CollocationGrid) -> Self {
        Self {
            coeffs: vec![0.0; grid.n_coeffs()],
        }
    }

    pub fn constant(grid: &CollocationGrid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = value;
        f
    }

    /// `amplitude * cos(k pi x / L)`.
    pub fn mode(grid: &CollocationGrid, k: usize, amplitude: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[k] = amplitude;
        f
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Interpolates samples on the half grid `x_j = jL/N`, `j = 0..=N`.
    pub fn from_half_values(grid: &CollocationGrid, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.n_coeffs(), "half-grid length mismatch");
        let v = DVector::from_column_slice(values);
        let a = &grid.tables.even_analysis * v;
        Self {
            coeffs: a.as_slice().to_vec(),
        }
    }

    /// Interpolates an even function given pointwise.
    pub fn from_fn(grid: &CollocationGrid, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.half_nodes().into_iter().map(f).collect();
        Self::from_half_values(grid, &values)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Values on the half grid `x_j = jL/N`, `j = 0..=N`.
    pub fn half_values(&self, grid: &CollocationGrid) -> Vec<f64> {
        let a = DVector::from_column_slice(&self.coeffs);
        (&grid.tables.even_synthesis * a).as_slice().to_vec()
    }

    /// Values on all `2N` nodes of the period.
    pub fn values(&self, grid: &CollocationGrid) -> Vec<f64> {
        let half = self.half_values(grid);
        (0..2 * grid.n_modes)
            .map(|m| half[grid.full_to_half(m)])
            .collect()
    }

    /// Evaluates the trigonometric polynomial at an arbitrary `x`.
    pub fn eval(&self, grid: &CollocationGrid, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * (grid.wavenumber(k) * x).cos())
            .sum()
    }

    pub fn ddx(&self, grid: &CollocationGrid) -> OddField {
        OddField {
            coeffs: (1..=grid.n_modes)
                .map(|k| -grid.wavenumber(k) * self.coeffs[k])
                .collect(),
        }
    }

    /// Second derivative, computed in coefficient space.
    pub fn d2dx2(&self, grid: &CollocationGrid) -> EvenField {
        self.apply_multiplier(|k| -grid.wavenumber(k).powi(2))
    }

    /// Multiplies mode `k` by `m(k)`.
    pub fn apply_multiplier(&self, m: impl Fn(usize) -> f64) -> EvenField {
        EvenField {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| m(k) * a)
                .collect(),
        }
    }

    /// `∫_{-L}^{L} f g dx`.
    pub fn inner(&self, other: &EvenField, grid: &CollocationGrid) -> f64 {
        let l = grid.half_period;
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(k, (a, b))| if k == 0 { 2.0 * l * a * b } else { l * a * b })
            .sum()
    }

    /// Squared discrete Sobolev norm `sum_k w_k (1 + kappa_k^2)^s a_k^2`
    /// with `w_0 = 2L`, `w_k = L`.
    pub fn sobolev_norm_sq(&self, grid: &CollocationGrid, s: u32) -> f64 {
        let l = grid.half_period;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let w = if k == 0 { 2.0 * l } else { l };
                w * (1.0 + grid.wavenumber(k).powi(2)).powi(s as i32) * a * a
            })
            .sum()
    }

    pub fn sobolev_norm(&self, grid: &CollocationGrid, s: u32) -> f64 {
        self.sobolev_norm_sq(grid, s).sqrt()
    }

    /// Maximum absolute nodal value.
    pub fn sup_norm(&self, grid: &CollocationGrid) -> f64 {
        self.half_values(grid)
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zeroes every mode above two thirds of the retained band.
    pub fn dealiased(&self) -> EvenField {
        let n = self.coeffs.len() - 1;
        let cutoff = 2 * n / 3;
        EvenField {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| if k > cutoff { 0.0 } else { *a })
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> EvenField {
        EvenField {
            coeffs: self.coeffs.iter().map(|a| s * a).collect(),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &EvenField) -> EvenField {
        EvenField {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    /// Re-expresses the field on a grid with a different mode count,
    /// zero-padding or truncating the coefficient list.
    pub fn resampled(&self, n_modes: usize) -> EvenField {
        let mut coeffs = vec![0.0; n_modes + 1];
        for (dst, src) in coeffs.iter_mut().zip(&self.coeffs) {
            *dst = *src;
        }
        EvenField { coeffs }
    }
}

impl OddField {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// Interpolates samples on the half grid; samples at `x = 0, L` are ignored
    /// (an odd periodic function vanishes there).
    pub fn from_half_values(grid: &CollocationGrid, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.n_coeffs(), "half-grid length mismatch");
        let v = DVector::from_column_slice(values);
        let b = &grid.tables.odd_analysis * v;
        Self {
            coeffs: b.as_slice().to_vec(),
        }
    }

    /// Coefficients `b_1..b_N`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn half_values(&self, grid: &CollocationGrid) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coeffs);
        (&grid.tables.odd_synthesis * b).as_slice().to_vec()
    }

    pub fn values(&self, grid: &CollocationGrid) -> Vec<f64> {
        let half = self.half_values(grid);
        let n = grid.n_modes;
        (0..2 * n)
            .map(|m| {
                let j = grid.full_to_half(m);
                if m < n {
                    -half[j]
                } else {
                    half[j]
                }
            })
            .collect()
    }

    pub fn eval(&self, grid: &CollocationGrid, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| b * (grid.wavenumber(i + 1) * x).sin())
            .sum()
    }

    pub fn ddx(&self, grid: &CollocationGrid) -> EvenField {
        let mut coeffs = vec![0.0; grid.n_coeffs()];
        for (i, b) in self.coeffs.iter().enumerate() {
            coeffs[i + 1] = grid.wavenumber(i + 1) * b;
        }
        EvenField { coeffs }
    }
}
