use interwave::continuation::{
    bordered_tangent, classify_termination, continue_branch, newton_correct, parity_monitor,
    tangent, trace_path, BranchProblem, FoldProblem, GuardTrip, Monitors, TerminationHistory,
};
use interwave::{
    Alternative, ContinuationError, ContinuationSettings, Direction, Discretization, EvenField,
    KernelError, PhysicalParameters, Point, SystemError, VortexPair, WaveState, WaveSystem,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn system(n: usize, m: usize) -> WaveSystem {
    WaveSystem::new(
        PhysicalParameters::default(),
        Discretization {
            n_modes: n,
            vertical: m,
            ..Discretization::default()
        },
    )
    .unwrap()
}

/// Tangent at the origin by block substitution on the flat linearization:
/// the eta row of the strength derivative vanishes, the trace rows are
/// identity blocks and the speed row picks up the probe multipliers.
fn origin_tangent_oracle(sys: &WaveSystem) -> DVector<f64> {
    let n1 = sys.grid().n_coeffs();
    let de = sys.d_eps(&WaveState::zeros(sys.grid()), 0.0).unwrap();
    let mut t = DVector::zeros(3 * n1 + 2);
    for k in 0..n1 {
        let m = sys.params().flat_multiplier(sys.grid().wavenumber(k));
        t[k] = -de.r1.coeffs()[k] / m;
        t[n1 + k] = -de.r2.coeffs()[k];
        t[2 * n1 + k] = -de.r3.coeffs()[k];
    }
    let probe: f64 = (0..n1).map(|k| sys.flat_probe_multiplier(k) * t[2 * n1 + k]).sum();
    t[3 * n1] = -de.r4 - probe;
    t[3 * n1 + 1] = 1.0;
    let w = BranchProblem::weights(sys);
    let norm = t.iter().zip(w.iter()).map(|(a, w)| w * a * a).sum::<f64>().sqrt();
    t / norm
}

#[test]
fn newton_at_origin_takes_no_iterations() {
    let sys = system(16, 12);
    let out = newton_correct(&sys, &WaveState::zeros(sys.grid()), 0.0, &ContinuationSettings::default())
        .unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(out.state, WaveState::zeros(sys.grid()));
}

#[test]
fn newton_from_origin_small_strength() {
    let sys = system(64, 32);
    let eps = 1e-3;
    let out = newton_correct(&sys, &WaveState::zeros(sys.grid()), eps, &ContinuationSettings::default())
        .unwrap();
    assert!(out.iterations <= 5, "{} iterations", out.iterations);
    assert!(out.residual_norm <= 1e-10);
    let eta = out.state.eta.sup_norm(sys.grid());
    assert!(eta > 0.0 && eta <= 2.0 * eps * eps, "eta sup {eta:e}");
}

#[test]
fn guard_violation_fails_before_iterating() {
    let sys = system(16, 12);
    let mut guess = WaveState::zeros(sys.grid());
    guess.eta = EvenField::from_fn(sys.grid(), |x| -0.47 * (1.0 + x.cos()) / 2.0);
    let err = newton_correct(&sys, &guess, 0.0, &ContinuationSettings::default()).unwrap_err();
    assert!(matches!(
        err,
        ContinuationError::System(SystemError::Kernel(KernelError::VortexTooClose { .. }))
    ));
}

#[test]
fn origin_tangent_matches_block_substitution() {
    let offset = WaveSystem::new(
        PhysicalParameters {
            pair: VortexPair::new(Point::new(0.0, -0.45), Point::new(0.0, 0.6), 1.0).unwrap(),
            ..PhysicalParameters::default()
        },
        Discretization::default(),
    )
    .unwrap();
    for sys in [system(64, 32), offset] {
        check_origin_tangent(&sys);
    }
}

fn check_origin_tangent(sys: &WaveSystem) {
    let origin = WaveState::zeros(sys.grid());
    let t = tangent(sys, &origin, 0.0, None, Direction::Forward).unwrap();
    let oracle = origin_tangent_oracle(sys);
    assert!((&t - &oracle).amax() < 1e-8);
    let n1 = sys.grid().n_coeffs();
    for k in 0..n1 {
        assert!(t[k].abs() < 1e-12);
    }
    // dc/deps = c1 + sum_k m_k phi_k with phi the interface trace
    let de = sys.d_eps(&origin, 0.0).unwrap();
    let dc = sys.c1()
        + (0..n1)
            .map(|k| sys.flat_probe_multiplier(k) * de.r3.coeffs()[k])
            .sum::<f64>();
    assert!((t[3 * n1] / t[3 * n1 + 1] - dc).abs() < 1e-8);
    let back = tangent(sys, &origin, 0.0, None, Direction::Backward).unwrap();
    assert!((&back + &t).amax() < 1e-14);
    // the interface trace does not cancel for an offset pair
    if !sys.params().pair.is_mirror_symmetric() {
        assert!(de.r3.sup_norm(sys.grid()) > 1e-3);
    }
}

#[test]
fn tangent_is_invariant_under_scaling() {
    let sys = system(16, 12);
    let origin = WaveState::zeros(sys.grid());
    let (_, j, de) = sys.linearize(&origin, 0.0).unwrap();
    let w = BranchProblem::weights(&sys);
    let a = bordered_tangent(&j, &de.pack(), &w, None, Direction::Forward).unwrap();
    let b = bordered_tangent(&(&j * 2.0), &(de.pack() * 2.0), &w, None, Direction::Forward).unwrap();
    assert!((a - b).amax() < 1e-14);
}

#[test]
fn small_strength_asymptotics() {
    let sys = system(64, 32);
    let settings = ContinuationSettings::default();
    let origin = WaveState::zeros(sys.grid());
    let t = tangent(&sys, &origin, 0.0, None, Direction::Forward).unwrap();
    let n1 = sys.grid().n_coeffs();
    let predict = |eps: f64| {
        let v = t.rows(0, 3 * n1 + 1) * (eps / t[3 * n1 + 1]);
        WaveState::unpack(sys.grid(), &v.into_owned()).unwrap()
    };
    let solve = |eps: f64| {
        let out = newton_correct(&sys, &predict(eps), eps, &settings).unwrap();
        assert!(out.iterations <= 6);
        out.state
    };
    let s1 = solve(5e-4);
    let s2 = solve(1e-3);
    let ratio = s2.eta.sup_norm(sys.grid()) / s1.eta.sup_norm(sys.grid());
    assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");

    let phi = sys.d_eps(&origin, 0.0).unwrap().r3;
    let defect = |s: &WaveState, eps: f64| s.xi.axpy(eps, &phi).sup_norm(sys.grid()) / eps;
    assert!(defect(&s2, 1e-3) < 1e-2);
    assert!(defect(&s1, 5e-4) < defect(&s2, 1e-3));

    let dc = t[3 * n1] / t[3 * n1 + 1];
    let s = solve(1e-4);
    assert!(((s.c / 1e-4) - dc).abs() < 1e-4 * dc.abs());
}

#[test]
fn forward_branch_is_smooth_and_regular() {
    let sys = system(24, 16);
    let settings = ContinuationSettings {
        max_steps: 12,
        ..ContinuationSettings::default()
    };
    let b = continue_branch(&sys, &settings, Direction::Forward).unwrap();
    assert_eq!(b.termination, Alternative::MaxStepsReached);
    assert_eq!(b.points.len(), 13);
    assert_eq!(b.points[0].eps, 0.0);
    for w in b.points.windows(2) {
        assert!(w[1].eps > w[0].eps);
        assert!(w[1].diagnostics.eta_sup > w[0].diagnostics.eta_sup);
    }
    let wt = BranchProblem::weights(&sys);
    for t in b.tangents.windows(2) {
        let dot: f64 = (0..wt.len()).map(|i| wt[i] * t[0][i] * t[1][i]).sum();
        assert!(dot > 0.9, "tangent inner product {dot}");
    }
    for p in &b.points {
        assert!(p.diagnostics.residual_norm <= settings.newton_tol);
        assert!(p.diagnostics.newton_iterations <= 6);
        assert!(sys.check_state(&p.state).is_ok());
    }
    let signs = b.det_signs();
    assert!(parity_monitor(&signs).is_empty());
    assert!(signs.iter().all(|&s| s == signs[0] && s != 0));
}

#[test]
fn backward_branch_mirrors_forward_branch() {
    let sys = system(16, 12);
    let settings = ContinuationSettings {
        max_steps: 6,
        ..ContinuationSettings::default()
    };
    let fwd = continue_branch(&sys, &settings, Direction::Forward).unwrap();
    let bwd = continue_branch(&sys, &settings, Direction::Backward).unwrap();
    assert_eq!(fwd.points[0], bwd.points[0]);
    for (a, b) in fwd.points.iter().zip(&bwd.points).skip(1) {
        assert!(a.eps > 0.0 && b.eps < 0.0);
        assert!((a.eps + b.eps).abs() < 1e-10);
        let m = b.state.mirrored();
        let diff = (a.state.pack() - m.pack()).amax();
        assert!(diff < 1e-10, "mirror defect {diff:e}");
    }
}

#[test]
fn tiny_norm_cap_stops_unbounded() {
    let sys = system(16, 12);
    let settings = ContinuationSettings {
        norm_cap: 1e-6,
        ..ContinuationSettings::default()
    };
    let b = continue_branch(&sys, &settings, Direction::Forward).unwrap();
    assert_eq!(b.termination, Alternative::Unbounded);
    assert_eq!(b.points.len(), 2);
}

#[test]
fn vortex_near_interface_stops_the_branch() {
    let params = PhysicalParameters {
        pair: VortexPair::mirrored(0.1, 1.0).unwrap(),
        ..PhysicalParameters::default()
    };
    let sys = WaveSystem::new(
        params,
        Discretization {
            n_modes: 24,
            vertical: 16,
            ..Discretization::default()
        },
    )
    .unwrap();
    let settings = ContinuationSettings {
        max_steps: 80,
        ..ContinuationSettings::default()
    };
    let b = continue_branch(&sys, &settings, Direction::Forward).unwrap();
    assert_eq!(b.termination, Alternative::VortexNearInterface);
    let last = b.points.last().unwrap();
    assert!(last.diagnostics.min_vortex_distance < 0.06);
    for p in &b.points {
        assert!(p.diagnostics.min_vortex_distance >= 0.05);
    }
}

#[test]
fn toy_fold_reports_one_sign_change() {
    let settings = ContinuationSettings {
        ds0: 0.02,
        ds_max: 0.05,
        max_steps: 40,
        ..ContinuationSettings::default()
    };
    let path = trace_path(&FoldProblem, &DVector::zeros(2), 0.0, &settings, Direction::Backward).unwrap();
    let signs = path.det_signs();
    let changes = parity_monitor(&signs);
    assert_eq!(changes.len(), 1, "{signs:?}");
    let i = changes[0];
    let (a, b) = (&path.points[i - 1], &path.points[i]);
    assert!(a.x[0] > -0.25 && b.x[0] < -0.25);
    for p in &path.points {
        assert!(p.residual_norm <= settings.newton_tol);
        assert!(p.lambda >= -1.0 / 16.0 - 1e-12);
    }
    // the forward direction never meets the fold
    let fwd = trace_path(&FoldProblem, &DVector::zeros(2), 0.0, &settings, Direction::Forward).unwrap();
    assert!(parity_monitor(&fwd.det_signs()).is_empty());
}

#[test]
fn flat_determinant_sign_is_the_multiplier_product() {
    let sys = system(64, 32);
    let (sign, smin, smax) =
        interwave::continuation::jacobian_signature(&sys.flat_linearization());
    let closed: f64 = (0..sys.grid().n_coeffs())
        .map(|k| sys.params().flat_multiplier(sys.grid().wavenumber(k)).signum())
        .product();
    assert_eq!(sign as f64, closed);
    assert!(smin > 1e-6 && smax > smin);
}

proptest! {
    #[test]
    fn classification_respects_precedence(
        norm in 0.0..200.0f64,
        gap in 0.0..1.0f64,
        dist in 0.0..1.0f64,
        guard in prop::option::of(prop_oneof![Just(GuardTrip::Vortex), Just(GuardTrip::Boundary)]),
        failed in any::<bool>(),
    ) {
        let s = ContinuationSettings::default();
        let h = TerminationHistory {
            last: Some(Monitors { norm, boundary_gap: gap, vortex_distance: dist }),
            guard,
            step_failed: failed,
        };
        let alt = classify_termination(&h, &s);
        let vortex = dist < s.delta_guard || guard == Some(GuardTrip::Vortex);
        let boundary = gap < s.gap_floor || guard == Some(GuardTrip::Boundary);
        let expected = if vortex {
            Alternative::VortexNearInterface
        } else if boundary {
            Alternative::InterfaceTouchesBoundary
        } else if norm > s.norm_cap {
            Alternative::Unbounded
        } else if failed {
            Alternative::NewtonFailure
        } else {
            Alternative::MaxStepsReached
        };
        prop_assert_eq!(alt, expected);
    }

    #[test]
    fn parity_changes_point_at_sign_flips(signs in prop::collection::vec(prop_oneof![Just(-1i8), Just(0i8), Just(1i8)], 0..30)) {
        let changes = parity_monitor(&signs);
        let nonzero: Vec<i8> = signs.iter().copied().filter(|&s| s != 0).collect();
        let flips = nonzero.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(changes.len(), flips);
        for &i in &changes {
            prop_assert!(signs[i] != 0);
        }
    }
}
