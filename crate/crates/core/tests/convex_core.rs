use semopt_core::convex::{
    reference,
    check_derivatives, kkt_residual, phase1_feasible, solve_barrier, BarrierOptions,
    ConvexProgram, FnConstraint, FnProgram, Phase1, SolveError, SolveStatus,
};
use semopt_core::linalg::SymMatrix;

fn opts() -> BarrierOptions<f64> {
    BarrierOptions::default()
}

fn shifted_parabola() -> FnProgram<f64> {
    reference::shifted_parabola().program
}

fn log_box() -> FnProgram<f64> {
    reference::log_box().program
}

fn split_program() -> FnProgram<f64> {
    reference::rate_split().program
}

/// Dense grid maximum of a + log2(1+g) over the triangle a + g <= 2.
fn split_grid_oracle() -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    let n = 200_000;
    for i in 0..=n {
        let g = 2.0 * i as f64 / n as f64;
        let v = (2.0 - g) + (1.0 + g).log2();
        if v > best.0 {
            best = (v, g);
        }
    }
    best
}

#[test]
fn phase1_finds_interval_interior() {
    let p = FnProgram::linear(vec![0.0])
        .constraint(FnConstraint::quadratic("x^2<=1", vec![vec![2.0]], vec![0.0], -1.0))
        .with_start(vec![5.0]);
    match phase1_feasible(&p, &opts()).unwrap() {
        Phase1::Feasible { x, .. } => assert!(x[0].abs() < 1.0, "x = {x:?}"),
        other => panic!("expected feasible, got {other:?}"),
    }
}

#[test]
fn phase1_certifies_empty_set() {
    let p = FnProgram::linear(vec![0.0])
        .constraint(FnConstraint::linear("x<=-1", vec![1.0], 1.0))
        .constraint(FnConstraint::linear("x>=1", vec![-1.0], 1.0));
    match phase1_feasible(&p, &opts()).unwrap() {
        Phase1::Infeasible { s, binding, .. } => {
            assert!(s >= 1.0 - 1e-6, "s = {s}");
            assert_eq!(binding.len(), 2);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
    assert!(matches!(
        solve_barrier(&p, &opts()),
        Err(SolveError::Infeasible { .. })
    ));
}

#[test]
fn phase1_intersects_box_and_halfline() {
    let p = FnProgram::linear(vec![0.0])
        .constraint(FnConstraint::lower_bound("x>=0", 1, 0, 0.0))
        .constraint(FnConstraint::upper_bound("x<=1", 1, 0, 1.0))
        .constraint(FnConstraint::lower_bound("x>=0.5", 1, 0, 0.5));
    match phase1_feasible(&p, &opts()).unwrap() {
        Phase1::Feasible { x, .. } => assert!(x[0] > 0.5 && x[0] < 1.0, "x = {x:?}"),
        other => panic!("expected feasible, got {other:?}"),
    }
}

#[test]
fn projection_onto_active_constraint() {
    let r = solve_barrier(&shifted_parabola(), &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!((r.x[0] - 2.0).abs() < 1e-4 * 2.0);
    assert!((r.objective - 1.0).abs() < 1e-4);
    assert!(r.kkt.max_residual() <= 1e-6);
}

#[test]
fn monotone_objective_hits_box() {
    let r = solve_barrier(&log_box(), &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!((r.x[0] - 3.0).abs() < 1e-4 * 3.0);
    assert!(r.kkt.max_residual() <= 1e-6);
}

#[test]
fn rate_split_stationarity() {
    let (grid_value, grid_g) = split_grid_oracle();
    let ln2 = std::f64::consts::LN_2;
    let analytic_g = 1.0 / ln2 - 1.0;
    assert!((grid_g - analytic_g).abs() < 1e-4);

    let r = solve_barrier(&split_program(), &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    let (a, g) = (r.x[0], r.x[1]);
    assert!((g - analytic_g).abs() < 1e-4 * analytic_g, "g = {g}");
    assert!((a - (2.0 - analytic_g)).abs() < 1e-4 * a, "a = {a}");
    assert!(((-r.objective) - grid_value).abs() < 1e-4 * grid_value);
    assert!(r.kkt.max_residual() <= 1e-6);
}

#[test]
fn kkt_residual_properties() {
    // Inactive constraint, zero duals, unconstrained minimizer.
    let p = FnProgram::<f64>::new(
        1,
        |x: &[f64]| (x[0] - 1.0).powi(2),
        |x, g| g[0] = 2.0 * (x[0] - 1.0),
        |_, s, h| h.add(0, 0, 2.0 * s),
    )
    .constraint(FnConstraint::upper_bound("x<=5", 1, 0, 5.0));
    let k = kkt_residual(&p, &[1.0], &[0.0]).unwrap();
    assert!(k.stationarity < 1e-15);
    assert_eq!(k.primal, 0.0);

    let q = shifted_parabola();
    let r = solve_barrier(&q, &opts()).unwrap();
    let at = kkt_residual(&q, &r.x, &r.duals).unwrap();
    for delta in [1e-3, -1e-3] {
        let moved = kkt_residual(&q, &[r.x[0] + delta], &r.duals).unwrap();
        assert!(moved.stationarity > at.stationarity);
    }
    assert!(kkt_residual(&q, &[1.0, 2.0], &r.duals).is_err());
}

#[test]
fn barrier_objective_trace_is_monotone() {
    for r in [
        solve_barrier(&shifted_parabola(), &opts()).unwrap(),
        solve_barrier(&log_box(), &opts()).unwrap(),
        solve_barrier(&split_program(), &opts()).unwrap(),
    ] {
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()), "{:?}", r.objective_trace);
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let progs: Vec<Box<dyn ConvexProgram<f64>>> = vec![
        Box::new(shifted_parabola()),
        Box::new(log_box()),
        Box::new(split_program()),
    ];
    for p in &progs {
        for _ in 0..100 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(0.01..1.9)).collect();
            let c = check_derivatives(p.as_ref(), &x, 1e-6);
            assert!(c.max_error() < 1e-5, "{c:?} at {x:?}");
        }
    }
}

#[test]
fn grid_agreement_in_two_dimensions() {
    // min (x-0.3)^2 + (y-2)^2 + x y / 2  s.t.  x^2 + y^2 <= 1, x >= 0
    let p = FnProgram::<f64>::new(
        2,
        |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] - 2.0).powi(2) + 0.5 * x[0] * x[1],
        |x, g| {
            g[0] = 2.0 * (x[0] - 0.3) + 0.5 * x[1];
            g[1] = 2.0 * (x[1] - 2.0) + 0.5 * x[0];
        },
        |_, s, h: &mut SymMatrix<f64>| {
            h.add(0, 0, 2.0 * s);
            h.add(1, 1, 2.0 * s);
            h.add_sym(0, 1, 0.5 * s);
        },
    )
    .constraint(FnConstraint::quadratic(
        "disk",
        vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        vec![0.0, 0.0],
        -1.0,
    ))
    .constraint(FnConstraint::lower_bound("x>=0", 2, 0, 0.0));
    let r = solve_barrier(&p, &opts()).unwrap();
    // The unconstrained minimizer lies outside the disk, so the optimum is on
    // the arc x >= 0; a fine angle sweep plus a coarse interior grid.
    let mut best = f64::INFINITY;
    let n = 1_000_000;
    for i in 0..=n {
        let th = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n as f64;
        best = best.min(p.objective(&[th.cos().max(0.0), th.sin()]));
    }
    let mut interior = f64::INFINITY;
    for i in 0..=200 {
        for j in 0..=400 {
            let (x, y) = (i as f64 / 200.0, -1.0 + j as f64 / 200.0);
            if x * x + y * y <= 1.0 {
                interior = interior.min(p.objective(&[x, y]));
            }
        }
    }
    assert!(interior >= best);
    assert!(r.objective <= best + 1e-4 * best.abs());
    assert!((r.objective - best).abs() <= 1e-4 * best.abs());
}

#[test]
fn single_precision_solve() {
    let p = FnProgram::<f32>::new(
        1,
        |x: &[f32]| (x[0] - 1.0).powi(2),
        |x, g| g[0] = 2.0 * (x[0] - 1.0),
        |_, s, h| h.add(0, 0, 2.0 * s),
    )
    .constraint(FnConstraint::linear("x>=2", vec![-1.0], 2.0))
    .with_start(vec![5.0]);
    let o = BarrierOptions::<f32> {
        tol_gap: 1e-3,
        tol_kkt: 1e-2,
        newton_tol: 1e-5,
        ..Default::default()
    };
    let r = solve_barrier(&p, &o).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!((r.x[0] - 2.0).abs() < 1e-2);
}

#[test]
fn reference_programs_reach_their_optima() {
    for r in reference::all::<f64>() {
        let out = solve_barrier(&r.program, &opts()).unwrap();
        assert_eq!(out.status, SolveStatus::Converged, "{}", r.name);
        let rel = (out.objective - r.optimum_value).abs() / r.optimum_value.abs();
        assert!(rel < 1e-4, "{}: {} vs {}", r.name, out.objective, r.optimum_value);
        for (x, y) in out.x.iter().zip(&r.optimum_x) {
            assert!((x - y).abs() < 1e-4 * y.abs(), "{}", r.name);
        }
    }
    let (grid_value, _) = split_grid_oracle();
    assert!((-reference::rate_split::<f64>().optimum_value - grid_value).abs() < 1e-9);
}
