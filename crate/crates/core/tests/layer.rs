use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use interwave::layer::{
    dno, eval_interior_dy, shape_derivative, shape_derivative_with_step, solve_layer, Layer,
    LayerDiscretization, LayerGeometry, LayerOperator, LayerSettings, ShapeOutput, ShapeTarget,
};
use interwave::{CollocationGrid, EvenField, LayerError, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: f64 = 1.0;

fn setup(n: usize, m: usize) -> (CollocationGrid, LayerDiscretization) {
    let grid = CollocationGrid::new(PI, n).unwrap();
    let disc = LayerDiscretization::new(
        &grid,
        LayerSettings {
            vertical: m,
            ..LayerSettings::default()
        },
    )
    .unwrap();
    (grid, disc)
}

fn flat(which: Layer, grid: &CollocationGrid) -> LayerGeometry {
    LayerGeometry::new(which, D, EvenField::zeros(grid), grid, 0.02).unwrap()
}

fn wavy(which: Layer, grid: &CollocationGrid, amp: f64) -> LayerGeometry {
    let eta = EvenField::from_fn(grid, |x| amp * (x.cos() + 0.25 * (2.0 * x).cos()) - 0.1 * amp);
    LayerGeometry::new(which, D, eta, grid, 0.02).unwrap()
}

fn flat_multiplier(kappa: f64) -> f64 {
    if kappa == 0.0 {
        1.0 / D
    } else {
        kappa / (kappa * D).tanh()
    }
}

#[test]
fn flat_dno_multipliers_both_layers() {
    let (grid, disc) = setup(64, 32);
    for which in [Layer::Lower, Layer::Upper] {
        let geom = flat(which, &grid);
        for k in 0..=16 {
            let out = dno(&disc, &geom, &EvenField::mode(&grid, k, 1.0)).unwrap();
            let expect = flat_multiplier(grid.wavenumber(k));
            for (j, a) in out.coeffs().iter().enumerate() {
                let target = if j == k { expect } else { 0.0 };
                assert!(
                    (a - target).abs() < 1e-10 * expect,
                    "{which:?} k={k} j={j}: {a} vs {target}"
                );
            }
        }
    }
}

#[test]
fn flat_extension_matches_separation_of_variables() {
    let (grid, disc) = setup(32, 24);
    let geom = flat(Layer::Lower, &grid);
    for k in [0usize, 1, 3, 7] {
        let kap = grid.wavenumber(k);
        let sol = solve_layer(&disc, &geom, &EvenField::mode(&grid, k, 1.0)).unwrap();
        for &(x, y) in &[(0.3, -0.5), (1.7, -0.2), (2.9, -0.8)] {
            let exact = if k == 0 {
                (y + D) / D
            } else {
                (kap * x).cos() * (kap * (y + D)).sinh() / (kap * D).sinh()
            };
            let p = Point::new(x, y);
            assert!((sol.eval(p).unwrap() - exact).abs() < 1e-10);
            let dy = if k == 0 {
                1.0 / D
            } else {
                (kap * x).cos() * kap * (kap * (y + D)).cosh() / (kap * D).sinh()
            };
            assert!((eval_interior_dy(&sol, p).unwrap() - dy).abs() < 1e-10);
        }
    }
    // the upper strip is the mirror image
    let geom = flat(Layer::Upper, &grid);
    let kap = grid.wavenumber(2);
    let sol = solve_layer(&disc, &geom, &EvenField::mode(&grid, 2, 1.0)).unwrap();
    let p = Point::new(0.4, 0.35);
    let exact = (kap * 0.4).cos() * (kap * (D - 0.35)).sinh() / (kap * D).sinh();
    assert!((sol.eval(p).unwrap() - exact).abs() < 1e-10);
}

#[test]
fn zero_trace_gives_zero_solution() {
    let (grid, disc) = setup(16, 12);
    let geom = wavy(Layer::Lower, &grid, 0.2);
    let sol = solve_layer(&disc, &geom, &EvenField::zeros(&grid)).unwrap();
    assert_eq!(sol.nodal().amax(), 0.0);
    assert_eq!(eval_interior_dy(&sol, Point::new(0.0, -0.5)).unwrap(), 0.0);
}

#[test]
fn trace_and_wall_conditions_hold() {
    let (grid, disc) = setup(24, 16);
    let geom = wavy(Layer::Upper, &grid, 0.2);
    let trace = EvenField::from_fn(&grid, |x| (0.5 * x.cos()).exp());
    let sol = solve_layer(&disc, &geom, &trace).unwrap();
    let u = sol.nodal();
    let t = trace.half_values(&grid);
    for j in 0..grid.n_coeffs() {
        assert!((u[(j, 0)] - t[j]).abs() <= 1e-11 * t[j].abs());
        assert_eq!(u[(j, u.ncols() - 1)], 0.0);
    }
}

#[test]
fn degenerate_strip_and_points_outside_are_rejected() {
    let (grid, disc) = setup(16, 10);
    let eta = EvenField::from_fn(&grid, |x| 0.99 * x.cos());
    assert!(matches!(
        LayerGeometry::new(Layer::Lower, D, eta, &grid, 0.02),
        Err(LayerError::DegenerateStrip { .. })
    ));
    let sol = solve_layer(&disc, &flat(Layer::Lower, &grid), &EvenField::constant(&grid, 1.0)).unwrap();
    for y in [0.2, -0.01, -0.98, -1.5] {
        assert!(matches!(
            sol.eval_dy(Point::new(0.0, y)),
            Err(LayerError::PointOutsideLayer { .. })
        ));
    }
    assert!(LayerDiscretization::new(
        &grid,
        LayerSettings {
            vertical: 6,
            ..LayerSettings::default()
        }
    )
    .is_err());
}

#[test]
fn flat_dno_is_symmetric() {
    let (grid, disc) = setup(32, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let geom = flat(Layer::Lower, &grid);
    let random = |rng: &mut ChaCha8Rng| {
        EvenField::from_coeffs(
            (0..=32)
                .map(|k| rng.random_range(-1.0..1.0) / (1.0 + k as f64).powi(2))
                .collect(),
        )
    };
    let f = random(&mut rng);
    let g = random(&mut rng);
    let gf = dno(&disc, &geom, &f).unwrap();
    let gg = dno(&disc, &geom, &g).unwrap();
    assert_relative_eq!(gf.inner(&g, &grid), f.inner(&gg, &grid), max_relative = 1e-10);
}

#[test]
fn dno_converges_spectrally() {
    let trace_fn = |x: f64| (0.3 * x.cos()).exp();
    let compute = |n: usize, m: usize| {
        let (grid, disc) = setup(n, m);
        let eta = EvenField::from_fn(&grid, |x| 0.1 * x.cos());
        let geom = LayerGeometry::new(Layer::Lower, D, eta, &grid, 0.02).unwrap();
        let out = dno(&disc, &geom, &EvenField::from_fn(&grid, trace_fn)).unwrap();
        (0..50)
            .map(|i| out.eval(&grid, i as f64 * PI / 50.0))
            .collect::<Vec<_>>()
    };
    let coarse = compute(48, 24);
    let fine = compute(96, 48);
    let diff = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-8, "resolution change moved the DNO by {diff:e}");
}

#[test]
fn interior_dy_agrees_with_finite_difference_of_solution() {
    let (grid, disc) = setup(32, 24);
    let geom = wavy(Layer::Lower, &grid, 0.15);
    let trace = EvenField::from_fn(&grid, |x| x.cos() + 0.2 * (3.0 * x).cos());
    let sol = solve_layer(&disc, &geom, &trace).unwrap();
    let p = Point::new(0.7, -0.45);
    let h = 1e-4;
    let fd = (sol.eval(Point::new(p.x, p.y + h)).unwrap() - sol.eval(Point::new(p.x, p.y - h)).unwrap())
        / (2.0 * h);
    assert!((sol.eval_dy(p).unwrap() - fd).abs() < 1e-6);
    let fdx = (sol.eval(Point::new(p.x + h, p.y)).unwrap() - sol.eval(Point::new(p.x - h, p.y)).unwrap())
        / (2.0 * h);
    assert!((sol.eval_dx(p).unwrap() - fdx).abs() < 1e-6);
}

#[test]
fn shape_derivative_basic_properties() {
    let (grid, disc) = setup(24, 16);
    let geom = wavy(Layer::Lower, &grid, 0.1);
    let trace = EvenField::from_fn(&grid, |x| x.cos() + 0.5);
    let zero = shape_derivative(&disc, &geom, &trace, &EvenField::zeros(&grid), ShapeTarget::Dno).unwrap();
    match zero {
        ShapeOutput::Field(f) => assert!(f.sup_norm(&grid) == 0.0),
        ShapeOutput::Value(_) => panic!("expected a field"),
    }
    let dir = EvenField::from_fn(&grid, |x| 0.3 * (2.0 * x).cos());
    let field = |out: ShapeOutput| match out {
        ShapeOutput::Field(f) => f,
        ShapeOutput::Value(_) => panic!("expected a field"),
    };
    let one = field(shape_derivative(&disc, &geom, &trace, &dir, ShapeTarget::Dno).unwrap());
    let two = field(shape_derivative(&disc, &geom, &trace, &dir.scaled(2.0), ShapeTarget::Dno).unwrap());
    let err = two.axpy(-2.0, &one).sup_norm(&grid);
    assert!(err < 1e-6 * two.sup_norm(&grid), "linearity defect {err:e}");
}

#[test]
fn shape_derivative_richardson_ratio() {
    let (grid, disc) = setup(24, 16);
    let geom = wavy(Layer::Upper, &grid, 0.15);
    let trace = EvenField::from_fn(&grid, |x| (0.4 * x.cos()).exp());
    let dir = EvenField::from_fn(&grid, |x| x.cos() - 0.5 * (3.0 * x).cos());
    let at = |h: f64| match shape_derivative_with_step(&disc, &geom, &trace, &dir, ShapeTarget::Dno, h).unwrap() {
        ShapeOutput::Field(f) => f,
        ShapeOutput::Value(_) => unreachable!(),
    };
    let (a, b, c) = (at(2e-2), at(1e-2), at(5e-3));
    let ratio = a.axpy(-1.0, &b).sup_norm(&grid) / b.axpy(-1.0, &c).sup_norm(&grid);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn linearization_matches_finite_differences() {
    let (grid, disc) = setup(24, 16);
    let probe = Point::new(0.0, -0.5);
    for which in [Layer::Lower, Layer::Upper] {
        let geom = wavy(which, &grid, 0.12);
        let trace = EvenField::from_fn(&grid, |x| 0.7 * x.cos() + 0.2 * (2.0 * x).cos() + 0.1);
        let op = Arc::new(LayerOperator::new(&disc, geom.clone()).unwrap());
        let sol = op.solve(&trace.half_values(&grid)).unwrap();
        let probe_pt = if which == Layer::Lower { Some(probe) } else { None };
        let lin = sol.linearize(probe_pt).unwrap();

        // linear in the trace
        let t = sol.trace();
        let g = &lin.dno_trace * t;
        assert!((g - sol.dno_nodal()).amax() < 1e-11);

        // geometric part against central differences
        let dir = EvenField::from_fn(&grid, |x| 0.5 * (2.0 * x).cos() + 0.2 * x.cos() + 0.1);
        let fd = match shape_derivative_with_step(&disc, &geom, &trace, &dir, ShapeTarget::Dno, 1e-5).unwrap() {
            ShapeOutput::Field(f) => nalgebra::DVector::from_vec(f.half_values(&grid)),
            ShapeOutput::Value(_) => unreachable!(),
        };
        let lin_dir = &lin.dno_eta * nalgebra::DVector::from_vec(dir.half_values(&grid));
        let rel = (&lin_dir - &fd).amax() / fd.amax();
        assert!(rel < 1e-7, "{which:?}: relative defect {rel:e}");

        if let Some(p) = probe_pt {
            let pl = lin.probe.unwrap();
            assert!((pl.value - sol.eval_dy(p).unwrap()).abs() < 1e-13);
            assert!((pl.trace.dot(t) - pl.value).abs() < 1e-11);
            let fd = match shape_derivative_with_step(&disc, &geom, &trace, &dir, ShapeTarget::InteriorDy(p), 1e-5).unwrap() {
                ShapeOutput::Value(v) => v,
                ShapeOutput::Field(_) => unreachable!(),
            };
            let lin_v = pl.eta.dot(&nalgebra::DVector::from_vec(dir.half_values(&grid)));
            assert!((lin_v - fd).abs() < 1e-7 * fd.abs().max(1e-3), "{lin_v} vs {fd}");
        }
    }
}
