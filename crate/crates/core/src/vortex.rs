//! Point-vortex stream functions: the free-space logarithmic kernel, its
//! 2L-periodized counterpart, and their traces along the interface.

use std::f64::consts::PI;

use crate::error::KernelError;
use crate::spectral::{to_coeffs, CollocationGrid, EvenField, Parity, DEFAULT_TOL_PARITY};

/// Distance below which a kernel evaluation is treated as singular.
pub const DEFAULT_TOL_SING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Second derivatives of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hessian {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelChoice {
    FreeSpace,
    #[default]
    Periodized,
}

/// `(1/4pi) log(x^2 + y^2)`.
pub fn gamma(p: Point) -> Result<f64, KernelError> {
    check_free(p, DEFAULT_TOL_SING)?;
    Ok((p.x * p.x + p.y * p.y).ln() / (4.0 * PI))
}

/// `(x, y) / (2pi (x^2 + y^2))`.
pub fn gamma_grad(p: Point) -> Result<(f64, f64), KernelError> {
    check_free(p, DEFAULT_TOL_SING)?;
    let r2 = p.x * p.x + p.y * p.y;
    Ok((p.x / (2.0 * PI * r2), p.y / (2.0 * PI * r2)))
}

pub fn gamma_hessian(p: Point) -> Result<Hessian, KernelError> {
    check_free(p, DEFAULT_TOL_SING)?;
    let r2 = p.x * p.x + p.y * p.y;
    let r4 = r2 * r2;
    Ok(Hessian {
        xx: (p.y * p.y - p.x * p.x) / (2.0 * PI * r4),
        xy: -p.x * p.y / (PI * r4),
        yy: (p.x * p.x - p.y * p.y) / (2.0 * PI * r4),
    })
}

fn check_free(p: Point, tol: f64) -> Result<(), KernelError> {
    let r = p.norm();
    if r < tol || !r.is_finite() {
        return Err(KernelError::SingularEvaluation { distance: r });
    }
    Ok(())
}

/// Reduces `x` into `[-L, L]`.
fn wrap(x: f64, half_period: f64) -> f64 {
    let period = 2.0 * half_period;
    x - period * (x / period).round()
}

/// `(1/4pi) log(cosh(pi y / L) - cos(pi x / L))`.
pub fn periodic_gamma(p: Point, half_period: f64) -> Result<f64, KernelError> {
    Periodic::new(half_period, DEFAULT_TOL_SING).value(p)
}

pub fn periodic_gamma_grad(p: Point, half_period: f64) -> Result<(f64, f64), KernelError> {
    Periodic::new(half_period, DEFAULT_TOL_SING).grad(p)
}

pub fn periodic_gamma_hessian(p: Point, half_period: f64) -> Result<Hessian, KernelError> {
    Periodic::new(half_period, DEFAULT_TOL_SING).hessian(p)
}

/// The periodized kernel written through `D = cosh(ay) - cos(ax)
/// = 2 sinh^2(ay/2) + 2 sin^2(ax/2)`, `a = pi / L`, which avoids cancellation
/// near the singularity.
struct Periodic {
    a: f64,
    half_period: f64,
    tol: f64,
}

const LARGE_ARG: f64 = 20.0;

impl Periodic {
    fn new(half_period: f64, tol: f64) -> Self {
        Self {
            a: PI / half_period,
            half_period,
            tol,
        }
    }

    fn check(&self, p: Point) -> Result<Point, KernelError> {
        let q = Point::new(wrap(p.x, self.half_period), p.y);
        check_free(q, self.tol)?;
        Ok(q)
    }

    /// `D` scaled by `1 / cosh(ay)` together with `ln cosh(ay)`.
    fn denominator(&self, q: Point) -> (f64, f64, f64) {
        let (ax, ay) = (self.a * q.x, self.a * q.y);
        let t = ay.abs();
        if t < LARGE_ARG {
            let d = 2.0 * (0.5 * ay).sinh().powi(2) + 2.0 * (0.5 * ax).sin().powi(2);
            let ch = ay.cosh();
            (d / ch, ch.ln(), 1.0 / ch)
        } else {
            let e = (-t).exp();
            let r = 2.0 * e / (1.0 + e * e);
            let ln_cosh = t + (e * e).ln_1p() - std::f64::consts::LN_2;
            (1.0 - ax.cos() * r, ln_cosh, r)
        }
    }

    fn value(&self, p: Point) -> Result<f64, KernelError> {
        let q = self.check(p)?;
        let (scaled, ln_cosh, _) = self.denominator(q);
        Ok((ln_cosh + scaled.ln()) / (4.0 * PI))
    }

    fn grad(&self, p: Point) -> Result<(f64, f64), KernelError> {
        let q = self.check(p)?;
        let (ax, ay) = (self.a * q.x, self.a * q.y);
        let (scaled, _, r) = self.denominator(q);
        let c = self.a / (4.0 * PI);
        Ok((c * ax.sin() * r / scaled, c * ay.tanh() / scaled))
    }

    fn hessian(&self, p: Point) -> Result<Hessian, KernelError> {
        let q = self.check(p)?;
        let (ax, ay) = (self.a * q.x, self.a * q.y);
        let (scaled, _, r) = self.denominator(q);
        let c = self.a * self.a / (4.0 * PI);
        let s2 = scaled * scaled;
        // 1 - cosh cos, divided by cosh^2.
        let num = if ay.abs() < LARGE_ARG {
            (2.0 * (0.5 * ax).sin().powi(2) - 2.0 * (0.5 * ay).sinh().powi(2) * ax.cos()) * r * r
        } else {
            r * r - ax.cos() * r
        };
        let yy = c * num / s2;
        Ok(Hessian {
            xx: -yy,
            xy: -c * ax.sin() * r * ay.tanh() / s2,
            yy,
        })
    }
}

/// Kernel selection bound to the period and singularity tolerance of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub choice: KernelChoice,
    pub half_period: f64,
    pub tol_sing: f64,
}

impl Kernel {
    pub fn new(choice: KernelChoice, half_period: f64) -> Self {
        Self {
            choice,
            half_period,
            tol_sing: DEFAULT_TOL_SING,
        }
    }

    pub fn with_tol_sing(mut self, tol_sing: f64) -> Self {
        self.tol_sing = tol_sing;
        self
    }

    pub fn value(&self, p: Point) -> Result<f64, KernelError> {
        match self.choice {
            KernelChoice::FreeSpace => {
                check_free(p, self.tol_sing)?;
                gamma(p)
            }
            KernelChoice::Periodized => Periodic::new(self.half_period, self.tol_sing).value(p),
        }
    }

    pub fn grad(&self, p: Point) -> Result<(f64, f64), KernelError> {
        match self.choice {
            KernelChoice::FreeSpace => {
                check_free(p, self.tol_sing)?;
                gamma_grad(p)
            }
            KernelChoice::Periodized => Periodic::new(self.half_period, self.tol_sing).grad(p),
        }
    }

    pub fn hessian(&self, p: Point) -> Result<Hessian, KernelError> {
        match self.choice {
            KernelChoice::FreeSpace => {
                check_free(p, self.tol_sing)?;
                gamma_hessian(p)
            }
            KernelChoice::Periodized => Periodic::new(self.half_period, self.tol_sing).hessian(p),
        }
    }

    /// Distance from `p` to the nearest copy of `center` seen by this kernel.
    pub fn distance(&self, p: Point, center: Point) -> f64 {
        let d = p - center;
        match self.choice {
            KernelChoice::FreeSpace => d.norm(),
            KernelChoice::Periodized => Point::new(wrap(d.x, self.half_period), d.y).norm(),
        }
    }
}

/// Lower-layer vortex `z` and its upper-layer phantom `z_bar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexPair {
    lower: Point,
    upper: Point,
}

impl VortexPair {
    /// Both centers must sit on the symmetry axis with `-d < y0 < y0_bar < d`.
    pub fn new(lower: Point, upper: Point, depth: f64) -> Result<Self, KernelError> {
        if lower.x != 0.0 || upper.x != 0.0 {
            return Err(KernelError::InvalidPair(
                "vortex centers must lie on the symmetry axis x = 0".into(),
            ));
        }
        if !(-depth < lower.y && lower.y < upper.y && upper.y < depth) {
            return Err(KernelError::InvalidPair(format!(
                "need -d < y0 < y0_bar < d, got y0 = {}, y0_bar = {}, d = {depth}",
                lower.y, upper.y
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `z = (0, -h)`, `z_bar = (0, h)`.
    pub fn mirrored(height: f64, depth: f64) -> Result<Self, KernelError> {
        Self::new(Point::new(0.0, -height), Point::new(0.0, height), depth)
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    /// True when `z_bar` is the reflection of `z` across `y = 0`.
    pub fn is_mirror_symmetric(&self) -> bool {
        self.upper.y == -self.lower.y
    }

    /// Lower-layer vortex stream function `Gamma(p - z) - Gamma(p - z_bar)`.
    /// The upper-layer one is its negative.
    pub fn stream(&self, kernel: &Kernel, p: Point) -> Result<f64, KernelError> {
        Ok(kernel.value(p - self.lower)? - kernel.value(p - self.upper)?)
    }

    pub fn stream_grad(&self, kernel: &Kernel, p: Point) -> Result<(f64, f64), KernelError> {
        let (ax, ay) = kernel.grad(p - self.lower)?;
        let (bx, by) = kernel.grad(p - self.upper)?;
        Ok((ax - bx, ay - by))
    }

    pub fn stream_hessian(&self, kernel: &Kernel, p: Point) -> Result<Hessian, KernelError> {
        let a = kernel.hessian(p - self.lower)?;
        let b = kernel.hessian(p - self.upper)?;
        Ok(Hessian {
            xx: a.xx - b.xx,
            xy: a.xy - b.xy,
            yy: a.yy - b.yy,
        })
    }
}

/// `c_1 = Gamma_y(z - z_bar)` for the selected kernel.
pub fn c1(pair: &VortexPair, kernel: &Kernel) -> Result<f64, KernelError> {
    Ok(kernel.grad(pair.lower - pair.upper)?.1)
}

/// Vortex stream functions and derivatives sampled along `y = eta(x)` on the
/// half grid. The lower-layer function is `phi`; the upper one is `-phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexTraces {
    pub phi: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_y: Vec<f64>,
    pub phi_xy: Vec<f64>,
    pub phi_yy: Vec<f64>,
    /// Smallest node-to-center distance over both vortices.
    pub min_distance: f64,
}

impl VortexTraces {
    pub fn phi_bar(&self) -> Vec<f64> {
        self.phi.iter().map(|v| -v).collect()
    }

    pub fn phi_bar_x(&self) -> Vec<f64> {
        self.phi_x.iter().map(|v| -v).collect()
    }

    pub fn phi_bar_y(&self) -> Vec<f64> {
        self.phi_y.iter().map(|v| -v).collect()
    }
}

/// Smallest distance between the interface nodes and the two vortex centers.
pub fn min_vortex_distance(
    eta: &EvenField,
    pair: &VortexPair,
    kernel: &Kernel,
    grid: &CollocationGrid,
) -> f64 {
    let heights = eta.values(grid);
    grid.nodes()
        .iter()
        .zip(&heights)
        .map(|(&x, &y)| {
            let p = Point::new(x, y);
            kernel
                .distance(p, pair.lower)
                .min(kernel.distance(p, pair.upper))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Full-period nodal samples of `(phi, phi_x, phi_y)` along the interface.
pub fn full_period_traces(
    eta: &EvenField,
    pair: &VortexPair,
    kernel: &Kernel,
    grid: &CollocationGrid,
) -> Result<[Vec<f64>; 3], KernelError> {
    let heights = eta.values(grid);
    let mut out = [
        Vec::with_capacity(heights.len()),
        Vec::with_capacity(heights.len()),
        Vec::with_capacity(heights.len()),
    ];
    for (&x, &y) in grid.nodes().iter().zip(&heights) {
        let p = Point::new(x, y);
        let (gx, gy) = pair.stream_grad(kernel, p)?;
        out[0].push(pair.stream(kernel, p)?);
        out[1].push(gx);
        out[2].push(gy);
    }
    Ok(out)
}

/// Samples the vortex stream functions along the interface after checking
/// the distance guard; the symmetric samples are verified to have the
/// expected parity.
pub fn vortex_traces(
    eta: &EvenField,
    pair: &VortexPair,
    kernel: &Kernel,
    grid: &CollocationGrid,
    guard: f64,
) -> Result<VortexTraces, KernelError> {
    let min_distance = min_vortex_distance(eta, pair, kernel, grid);
    if min_distance <= guard {
        return Err(KernelError::VortexTooClose {
            distance: min_distance,
            guard,
        });
    }
    let [phi_full, phi_x_full, phi_y_full] = full_period_traces(eta, pair, kernel, grid)?;
    to_coeffs(grid, &phi_full, Parity::Even, DEFAULT_TOL_PARITY)?;
    to_coeffs(grid, &phi_y_full, Parity::Even, DEFAULT_TOL_PARITY)?;
    // the free-space kernel is not periodic, so phi_x does not vanish at x = -L
    if kernel.choice == KernelChoice::Periodized {
        to_coeffs(grid, &phi_x_full, Parity::Odd, DEFAULT_TOL_PARITY)?;
    }

    let heights = eta.half_values(grid);
    let n = heights.len();
    let mut t = VortexTraces {
        phi: Vec::with_capacity(n),
        phi_x: Vec::with_capacity(n),
        phi_y: Vec::with_capacity(n),
        phi_xy: Vec::with_capacity(n),
        phi_yy: Vec::with_capacity(n),
        min_distance,
    };
    for (&x, &y) in grid.half_nodes().iter().zip(&heights) {
        let p = Point::new(x, y);
        let (gx, gy) = pair.stream_grad(kernel, p)?;
        let h = pair.stream_hessian(kernel, p)?;
        t.phi.push(pair.stream(kernel, p)?);
        t.phi_x.push(gx);
        t.phi_y.push(gy);
        t.phi_xy.push(h.xy);
        t.phi_yy.push(h.yy);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn free_space_values() {
        assert_abs_diff_eq!(gamma(Point::new(1.0, 0.0)).unwrap(), 0.0);
        assert_relative_eq!(
            gamma(Point::new(0.0, std::f64::consts::E)).unwrap(),
            1.0 / (2.0 * PI),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            gamma(Point::new(3.0, 4.0)).unwrap(),
            5f64.ln() / (2.0 * PI),
            max_relative = 1e-15
        );
        assert!(matches!(
            gamma(Point::new(0.0, 0.0)),
            Err(KernelError::SingularEvaluation { .. })
        ));
        assert!(gamma_grad(Point::new(1e-13, 0.0)).is_err());
    }

    #[test]
    fn free_space_gradient() {
        let h = 0.37;
        let (gx, gy) = gamma_grad(Point::new(0.0, h)).unwrap();
        assert_eq!(gx, 0.0);
        assert_relative_eq!(gy, 1.0 / (2.0 * PI * h), max_relative = 1e-15);
        let (gx, gy) = gamma_grad(Point::new(h, 0.0)).unwrap();
        assert_relative_eq!(gx, 1.0 / (2.0 * PI * h), max_relative = 1e-15);
        assert_eq!(gy, 0.0);

        let p = Point::new(0.3, -0.7);
        let step = 1e-5;
        let fd_x = (gamma(Point::new(p.x + step, p.y)).unwrap()
            - gamma(Point::new(p.x - step, p.y)).unwrap())
            / (2.0 * step);
        let fd_y = (gamma(Point::new(p.x, p.y + step)).unwrap()
            - gamma(Point::new(p.x, p.y - step)).unwrap())
            / (2.0 * step);
        let (gx, gy) = gamma_grad(p).unwrap();
        assert_relative_eq!(gx, fd_x, max_relative = 1e-8);
        assert_relative_eq!(gy, fd_y, max_relative = 1e-8);
    }

    #[test]
    fn periodic_kernel_periodicity_and_local_behaviour() {
        let l = 1.3;
        for &(x, y) in &[(0.2, 0.1), (-0.9, 0.4), (1.1, -0.6)] {
            let a = periodic_gamma(Point::new(x, y), l).unwrap();
            let b = periodic_gamma(Point::new(x + 2.0 * l, y), l).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
            .iter()
            .map(|&r| {
                let p = Point::new(r * 0.6, r * 0.8);
                periodic_gamma(p, l).unwrap() - gamma(p).unwrap()
            })
            .collect();
        let spread = diffs.iter().cloned().fold(f64::MIN, f64::max)
            - diffs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-4, "spread {spread:e}");
        // limit value (1/4pi) log(a^2 / 2)
        let a = PI / l;
        assert_abs_diff_eq!(diffs[4], (a * a / 2.0).ln() / (4.0 * PI), epsilon = 1e-9);
    }

    #[test]
    fn periodic_far_field_gradient() {
        let l = 0.8;
        let (_, gy) = periodic_gamma_grad(Point::new(0.0, 10.0 * l), l).unwrap();
        assert_abs_diff_eq!(gy, 1.0 / (4.0 * l), epsilon = 1e-10);
        let (_, gy) = periodic_gamma_grad(Point::new(0.3, 400.0 * l), l).unwrap();
        assert_abs_diff_eq!(gy, 1.0 / (4.0 * l), epsilon = 1e-14);
        assert!(periodic_gamma(Point::new(0.3, 400.0 * l), l).unwrap().is_finite());
    }

    #[test]
    fn kernels_are_harmonic_and_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let l = PI;
        let h = 1e-3;
        let kernels = [
            Kernel::new(KernelChoice::FreeSpace, l),
            Kernel::new(KernelChoice::Periodized, l),
        ];
        for _ in 0..20 {
            let p = Point::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0));
            if p.norm() < 0.2 || Point::new(wrap(p.x, l), p.y).norm() < 0.2 {
                continue;
            }
            for k in &kernels {
                let f = |x: f64, y: f64| k.value(Point::new(x, y)).unwrap();
                let lap = (f(p.x + h, p.y) + f(p.x - h, p.y) + f(p.x, p.y + h) + f(p.x, p.y - h)
                    - 4.0 * f(p.x, p.y))
                    / (h * h);
                assert!(lap.abs() < 1e-5, "laplacian {lap:e} at {p:?}");
                let s = 1e-5;
                let (gx, gy) = k.grad(p).unwrap();
                let fx = (f(p.x + s, p.y) - f(p.x - s, p.y)) / (2.0 * s);
                let fy = (f(p.x, p.y + s) - f(p.x, p.y - s)) / (2.0 * s);
                assert_abs_diff_eq!(gx, fx, epsilon = 1e-7 * (1.0 + gx.abs()));
                assert_abs_diff_eq!(gy, fy, epsilon = 1e-7 * (1.0 + gy.abs()));
                let hs = k.hessian(p).unwrap();
                let g = |x: f64, y: f64| k.grad(Point::new(x, y)).unwrap();
                let hxx = (g(p.x + s, p.y).0 - g(p.x - s, p.y).0) / (2.0 * s);
                let hxy = (g(p.x, p.y + s).0 - g(p.x, p.y - s).0) / (2.0 * s);
                let hyy = (g(p.x, p.y + s).1 - g(p.x, p.y - s).1) / (2.0 * s);
                assert_abs_diff_eq!(hs.xx, hxx, epsilon = 1e-7 * (1.0 + hxx.abs()));
                assert_abs_diff_eq!(hs.xy, hxy, epsilon = 1e-7 * (1.0 + hxy.abs()));
                assert_abs_diff_eq!(hs.yy, hyy, epsilon = 1e-7 * (1.0 + hyy.abs()));
            }
        }
    }

    #[test]
    fn pair_validation() {
        assert!(VortexPair::new(Point::new(0.1, -0.5), Point::new(0.0, 0.5), 1.0).is_err());
        assert!(VortexPair::new(Point::new(0.0, 0.5), Point::new(0.0, -0.5), 1.0).is_err());
        assert!(VortexPair::new(Point::new(0.0, -1.5), Point::new(0.0, 0.5), 1.0).is_err());
        assert!(VortexPair::mirrored(0.5, 1.0).unwrap().is_mirror_symmetric());
    }

    #[test]
    fn c1_values() {
        let free = Kernel::new(KernelChoice::FreeSpace, PI);
        let pair = VortexPair::mirrored(0.5, 1.0).unwrap();
        assert_relative_eq!(c1(&pair, &free).unwrap(), -1.0 / (2.0 * PI), max_relative = 1e-15);
        let h = 0.3;
        let pair = VortexPair::mirrored(h, 1.0).unwrap();
        assert_relative_eq!(c1(&pair, &free).unwrap(), -1.0 / (4.0 * PI * h), max_relative = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let periodic = Kernel::new(KernelChoice::Periodized, PI);
        for _ in 0..10 {
            let y0 = rng.random_range(-0.9..0.0);
            let y1 = rng.random_range(0.0..0.9);
            let pair = VortexPair::new(Point::new(0.0, y0), Point::new(0.0, y1), 1.0).unwrap();
            assert!(c1(&pair, &free).unwrap() < 0.0);
            // swapping the two centers flips the sign (Gamma_y is odd in y)
            let swapped = free.grad(pair.upper() - pair.lower()).unwrap().1;
            assert_relative_eq!(swapped, -c1(&pair, &free).unwrap(), max_relative = 1e-15);
            let swapped = periodic.grad(pair.upper() - pair.lower()).unwrap().1;
            assert_relative_eq!(swapped, -c1(&pair, &periodic).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn flat_interface_traces() {
        let grid = CollocationGrid::new(PI, 16).unwrap();
        let pair = VortexPair::mirrored(0.5, 1.0).unwrap();
        let free = Kernel::new(KernelChoice::FreeSpace, PI);
        let eta = EvenField::zeros(&grid);
        let t = vortex_traces(&eta, &pair, &free, &grid, 0.05).unwrap();
        assert_abs_diff_eq!(t.phi[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(t.phi_y[0], 2.0 / PI, max_relative = 1e-14);
        assert!(t.phi_y.iter().all(|v| *v > 0.0));
        assert_abs_diff_eq!(t.min_distance, 0.5, epsilon = 1e-15);
        assert_eq!(t.phi_bar_y()[0], -t.phi_y[0]);
    }

    #[test]
    fn traces_have_declared_parity() {
        let grid = CollocationGrid::new(PI, 32).unwrap();
        let pair = VortexPair::new(Point::new(0.0, -0.4), Point::new(0.0, 0.6), 1.0).unwrap();
        let eta = EvenField::from_fn(&grid, |x| 0.1 * x.cos() - 0.05 * (2.0 * x).cos());
        for choice in [KernelChoice::FreeSpace, KernelChoice::Periodized] {
            let k = Kernel::new(choice, PI);
            let [phi, phi_x, phi_y] = full_period_traces(&eta, &pair, &k, &grid).unwrap();
            let n = grid.n_modes();
            let odd_energy = |v: &[f64], sign: f64| {
                let tot: f64 = v.iter().map(|a| a * a).sum();
                // x = -L is skipped: the free-space kernel is not periodic there
                let bad: f64 = (1..2 * n)
                    .map(|m| 0.5 * (v[m] - sign * v[2 * n - m]))
                    .map(|a| a * a)
                    .sum();
                bad / tot
            };
            assert!(odd_energy(&phi, 1.0) < 1e-12);
            assert!(odd_energy(&phi_y, 1.0) < 1e-12);
            assert!(odd_energy(&phi_x, -1.0) < 1e-12);
        }
    }

    #[test]
    fn guard_trips_near_vortex() {
        let grid = CollocationGrid::new(PI, 16).unwrap();
        let pair = VortexPair::mirrored(0.1, 1.0).unwrap();
        let k = Kernel::new(KernelChoice::Periodized, PI);
        let eta = EvenField::constant(&grid, -0.06);
        assert!(matches!(
            vortex_traces(&eta, &pair, &k, &grid, 0.05),
            Err(KernelError::VortexTooClose { .. })
        ));
    }
}
