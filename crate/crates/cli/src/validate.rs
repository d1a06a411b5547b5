//! Built-in invariant suite run by `interwave validate`.

use std::io::{self, Write};

use interwave::continuation::{
    classify_termination, jacobian_signature, parity_monitor, trace_path, ContinuationSettings,
    Direction, FoldProblem, GuardTrip, Monitors, TerminationHistory,
};
use interwave::layer::{dno, Layer, LayerDiscretization, LayerGeometry, LayerSettings};
use interwave::spectral::DEFAULT_TOL_PARITY;
use interwave::vortex::vortex_traces;
use interwave::{
    to_coeffs, Alternative, CollocationGrid, Discretization, EvenField, JacobianMode, Parity,
    PhysicalParameters, SpectralError, SpectralField, WaveState, WaveSystem,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> Check {
    check(name, false, format!("error: {err}"))
}

fn system(params: &PhysicalParameters, n: usize, m: usize) -> Result<WaveSystem, String> {
    WaveSystem::new(
        params.clone(),
        Discretization {
            n_modes: n,
            vertical: m,
            ..Discretization::default()
        },
    )
    .map_err(|e| e.to_string())
}

fn random_field(rng: &mut ChaCha8Rng, grid: &CollocationGrid, sup: f64) -> EvenField {
    let raw = EvenField::from_coeffs(
        (0..grid.n_coeffs())
            .map(|k| {
                if k <= 4 {
                    rng.random_range(-1.0..1.0) / (1.0 + k as f64).powi(2)
                } else {
                    0.0
                }
            })
            .collect(),
    );
    raw.scaled(sup / raw.sup_norm(grid))
}

fn random_state(rng: &mut ChaCha8Rng, grid: &CollocationGrid) -> WaveState {
    WaveState {
        eta: random_field(rng, grid, 0.03),
        xi_bar: random_field(rng, grid, 0.1),
        xi: random_field(rng, grid, 0.1),
        c: rng.random_range(-0.1..0.1),
    }
}

fn spectral_roundtrip(rng: &mut ChaCha8Rng) -> Check {
    let name = "spectral.parity_roundtrip";
    let grid = match CollocationGrid::new(std::f64::consts::PI, 32) {
        Ok(g) => g,
        Err(e) => return failed(name, e),
    };
    let coeffs: Vec<f64> = (0..grid.n_coeffs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = EvenField::from_coeffs(coeffs.clone());
    let back = match to_coeffs(&grid, &f.values(&grid), Parity::Even, DEFAULT_TOL_PARITY) {
        Ok(SpectralField::Even(e)) => e,
        Ok(_) => return check(name, false, "wrong parity returned".into()),
        Err(e) => return failed(name, e),
    };
    let err = back
        .coeffs()
        .iter()
        .zip(&coeffs)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let odd: Vec<f64> = grid.nodes().iter().map(|x| x.sin()).collect();
    let rejected = matches!(
        to_coeffs(&grid, &odd, Parity::Even, DEFAULT_TOL_PARITY),
        Err(SpectralError::ParityViolation { .. })
    );
    check(name, err < 1e-13 && rejected, format!("max error {err:.1e}, odd samples rejected: {rejected}"))
}

fn flat_dno(params: &PhysicalParameters, which: Layer) -> Check {
    let name = match which {
        Layer::Lower => "layer.flat_dno_lower",
        Layer::Upper => "layer.flat_dno_upper",
    };
    let run = || -> Result<f64, String> {
        let grid = CollocationGrid::new(params.half_period, 32).map_err(|e| e.to_string())?;
        let disc = LayerDiscretization::new(
            &grid,
            LayerSettings {
                vertical: 24,
                ..LayerSettings::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let geom = LayerGeometry::new(which, params.depth, EvenField::zeros(&grid), &grid, 0.02)
            .map_err(|e| e.to_string())?;
        let d = params.depth;
        let mut worst = 0.0_f64;
        for k in 0..=8 {
            let g = dno(&disc, &geom, &EvenField::mode(&grid, k, 1.0)).map_err(|e| e.to_string())?;
            let kap = grid.wavenumber(k);
            let expect = if k == 0 { 1.0 / d } else { kap / (kap * d).tanh() };
            worst = worst.max((g.coeffs()[k] - expect).abs() / expect);
        }
        Ok(worst)
    };
    match run() {
        Ok(rel) => check(name, rel < 1e-10, format!("max relative error {rel:.1e} for k <= 8")),
        Err(e) => failed(name, e),
    }
}

fn trace_parity(params: &PhysicalParameters, rng: &mut ChaCha8Rng) -> Check {
    let name = "vortex.trace_parity";
    let sys = match system(params, 32, 16) {
        Ok(s) => s,
        Err(e) => return failed(name, e),
    };
    let eta = random_field(rng, sys.grid(), 0.03);
    match vortex_traces(&eta, &params.pair, sys.kernel(), sys.grid(), 0.05) {
        Ok(_) => check(name, true, "traces have the declared parity".into()),
        Err(e) => failed(name, e),
    }
}

fn origin_checks(params: &PhysicalParameters) -> Vec<Check> {
    let sys = match system(params, 32, 16) {
        Ok(s) => s,
        Err(e) => {
            return vec![
                failed("system.origin_residual", &e),
                failed("system.origin_jacobian", &e),
                failed("continuation.flat_det_sign", &e),
            ]
        }
    };
    let origin = WaveState::zeros(sys.grid());
    let residual = match sys.residual(&origin, 0.0) {
        Ok(r) => {
            let m = r.max_abs();
            check("system.origin_residual", m < 1e-12, format!("max block residual {m:.1e}"))
        }
        Err(e) => failed("system.origin_residual", e),
    };
    let flat = sys.flat_linearization();
    let jac = match sys.jacobian(&origin, 0.0, JacobianMode::Analytic) {
        Ok(j) => {
            let d = (&j - &flat).amax();
            check("system.origin_jacobian", d < 1e-9, format!("max entry difference {d:.1e}"))
        }
        Err(e) => failed("system.origin_jacobian", e),
    };
    let (sign, smin, _) = jacobian_signature(&flat);
    let closed: f64 = (0..sys.grid().n_coeffs())
        .map(|k| params.flat_multiplier(sys.grid().wavenumber(k)).signum())
        .product();
    let det = check(
        "continuation.flat_det_sign",
        sign as f64 == closed && smin > 1e-6,
        format!("det sign {sign}, closed form {closed}, sigma_min {smin:.2e}"),
    );
    vec![residual, jac, det]
}

fn fd_checks(params: &PhysicalParameters, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let sys = match system(params, 12, 10) {
        Ok(s) => s,
        Err(e) => return vec![failed("system.jacobian_fd", &e), failed("system.d_eps_fd", &e)],
    };
    let s = random_state(rng, sys.grid());
    let eps = 0.03;
    let jac = match (
        sys.jacobian(&s, eps, JacobianMode::Analytic),
        sys.jacobian(&s, eps, JacobianMode::FiniteDifference),
    ) {
        (Ok(a), Ok(f)) => {
            let rel = (&a - &f).norm() / f.norm();
            check("system.jacobian_fd", rel < 1e-5, format!("relative Frobenius gap {rel:.1e}"))
        }
        (Err(e), _) | (_, Err(e)) => failed("system.jacobian_fd", e),
    };
    let h = 1e-6;
    let de = match (sys.d_eps(&s, eps), sys.residual(&s, eps + h), sys.residual(&s, eps - h)) {
        (Ok(d), Ok(p), Ok(m)) => {
            let fd = (p.pack() - m.pack()) / (2.0 * h);
            let gap = (d.pack() - fd).amax();
            check("system.d_eps_fd", gap < 1e-7, format!("max gap {gap:.1e}"))
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => failed("system.d_eps_fd", e),
    };
    vec![jac, de]
}

fn mirror(params: &PhysicalParameters, rng: &mut ChaCha8Rng) -> Check {
    let name = "system.mirror_symmetry";
    if !params.pair.is_mirror_symmetric() {
        return check(name, true, "not applicable: vortex pair is not mirror symmetric".into());
    }
    let sys = match system(params, 16, 12) {
        Ok(s) => s,
        Err(e) => return failed(name, e),
    };
    let s = random_state(rng, sys.grid());
    match (sys.residual(&s, 0.04), sys.residual(&s.mirrored(), -0.04)) {
        (Ok(a), Ok(b)) => {
            let mut flip = b.pack();
            let n1 = sys.grid().n_coeffs();
            for i in n1..flip.len() {
                flip[i] = -flip[i];
            }
            let gap = (a.pack() - flip).amax();
            check(name, gap < 1e-12, format!("mirror defect {gap:.1e}"))
        }
        (Err(e), _) | (_, Err(e)) => failed(name, e),
    }
}

fn toy_fold() -> Check {
    let name = "continuation.toy_fold";
    let settings = ContinuationSettings {
        ds0: 0.02,
        ds_max: 0.05,
        max_steps: 40,
        ..ContinuationSettings::default()
    };
    match trace_path(&FoldProblem, &DVector::zeros(2), 0.0, &settings, Direction::Backward) {
        Ok(path) => {
            let changes = parity_monitor(&path.det_signs());
            check(name, changes.len() == 1, format!("{} sign change(s) at {changes:?}", changes.len()))
        }
        Err(e) => failed(name, e),
    }
}

fn precedence() -> Check {
    let s = ContinuationSettings::default();
    let both = TerminationHistory {
        last: Some(Monitors {
            norm: 2.0 * s.norm_cap,
            boundary_gap: 0.5 * s.gap_floor,
            vortex_distance: 0.5 * s.delta_guard,
        }),
        guard: None,
        step_failed: false,
    };
    let guard = TerminationHistory {
        last: Some(Monitors {
            norm: 1.0,
            boundary_gap: 1.0,
            vortex_distance: 1.0,
        }),
        guard: Some(GuardTrip::Boundary),
        step_failed: true,
    };
    let a = classify_termination(&both, &s);
    let b = classify_termination(&guard, &s);
    check(
        "continuation.termination_precedence",
        a == Alternative::VortexNearInterface && b == Alternative::InterfaceTouchesBoundary,
        format!("all thresholds -> {a}, boundary guard -> {b}"),
    )
}

/// Runs every check; randomized inputs are drawn from `seed`.
pub fn run_checks(params: &PhysicalParameters, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        spectral_roundtrip(&mut rng),
        flat_dno(params, Layer::Lower),
        flat_dno(params, Layer::Upper),
        trace_parity(params, &mut rng),
    ];
    out.extend(origin_checks(params));
    out.extend(fd_checks(params, &mut rng));
    out.push(mirror(params, &mut rng));
    out.push(toy_fold());
    out.push(precedence());
    out
}

/// Prints one line per check and returns whether all passed.
pub fn report(checks: &[Check], out: &mut impl Write) -> io::Result<bool> {
    for c in checks {
        writeln!(out, "{} {:<38} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    writeln!(out, "{passed}/{} checks passed", checks.len())?;
    Ok(passed == checks.len())
}
