mod common;

use common::{scenario, shipped_spec, default_scenario};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semopt_core::convex::{check_derivatives, ConvexProgram};
use semopt_core::rates::{self, check_feasibility, evaluate, inner, FEASIBILITY_TOL};
use semopt_core::sca::{
    build_subproblem, init_point, rotate_private_phases, sca_iterate, sca_iterate_from,
    trace_csv, transmit_budget, Access, DcSplit, ScaError, ScaOptions, TRACE_CSV_HEADER,
};

fn rsma() -> ScaOptions<f64> {
    ScaOptions::default()
}

fn sdma() -> ScaOptions<f64> {
    ScaOptions {
        access: Access::Sdma,
        ..ScaOptions::default()
    }
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()),
            "objective fell from {} to {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn constraint_and_variable_counts() {
    let s = default_scenario(7);
    let spec = shipped_spec();
    let rho = vec![0.5; 4];
    let st = init_point(&s, &spec, &rho, Access::Rsma).unwrap();
    let sub = build_subproblem(&s, &spec, &st, &rsma()).unwrap();
    assert_eq!(sub.num_constraints(), 11 * 4 + 1);
    // 5K real slacks/splits plus (K+1)M complex beam entries.
    assert_eq!(sub.num_variables(), 5 * 4 + 2 * 8 * 5);

    let st = init_point(&s, &spec, &rho, Access::Sdma).unwrap();
    let sub = build_subproblem(&s, &spec, &st, &sdma()).unwrap();
    assert_eq!(sub.num_constraints(), 1 + 5 * 4);
    assert_eq!(sub.num_variables(), 2 * 8 * 4 + 2 * 4);
    let labels: Vec<String> = (0..sub.num_constraints()).map(|i| sub.label(i)).collect();
    assert!(labels.iter().all(|l| !l.contains("common")));
}

#[test]
fn scalar_matched_filter() {
    let s = scenario(1, 1, 42);
    let spec = shipped_spec();
    let st = init_point(&s, &spec, &[1.0], Access::Sdma).unwrap();
    let h = s.channels[0][0];
    let w = st.point.private_beams[0][0];
    let dir = w / w.norm();
    let expect = h.conj() / h.norm();
    assert!((dir - expect).norm() < 1e-12, "{dir} vs {expect}");
}

#[test]
fn init_slacks_hold_with_equality() {
    let s = default_scenario(3);
    let spec = shipped_spec();
    let st = init_point(&s, &spec, &[1.0, 0.7, 0.5, 0.25], Access::Rsma).unwrap();
    let a = &st.point;
    for k in 0..4 {
        let row = &s.channels[k];
        let p: Vec<f64> = a.private_beams.iter().map(|w| inner(row, w).norm_sqr()).collect();
        let total: f64 = p.iter().sum();
        let alpha = total - p[k] + s.noise_power_w;
        let beta = total + s.noise_power_w;
        assert!((st.alpha[k] - alpha).abs() <= 1e-14 * alpha);
        assert!((st.beta[k] - beta).abs() <= 1e-14 * beta);
        assert!((st.gamma[k] - p[k] / alpha).abs() <= 1e-12 * st.gamma[k]);
        let c = inner(row, &a.common_beam).norm_sqr();
        assert!((st.delta[k] - c / beta).abs() <= 1e-12 * st.delta[k]);
        // Phases rotated so the useful signal is real and nonnegative.
        let u = inner(row, &a.private_beams[k]);
        assert!(u.re > 0.0 && u.im.abs() <= 1e-12 * u.re);
    }
    let split: f64 = a.rate_split.iter().sum();
    let r0 = rates::min_common_rate(&s, a).unwrap();
    assert!((split - r0).abs() <= 1e-12 * r0);
}

#[test]
fn init_uses_ninety_percent_of_budget() {
    let s = default_scenario(5);
    let spec = shipped_spec();
    for rho in [[1.0; 4], [0.25; 4], [0.9, 0.6, 0.4, 0.3]] {
        let (_, budget) = transmit_budget(&s, &spec, &rho).unwrap();
        for access in [Access::Rsma, Access::Sdma] {
            let st = init_point(&s, &spec, &rho, access).unwrap();
            let p = st.point.transmit_power();
            assert!((p - 0.9 * budget).abs() <= 1e-10 * budget, "{p} vs {budget}");
        }
    }
}

#[test]
fn power_exhausted_by_computation() {
    let mut s = default_scenario(1);
    s.comp_power_coeff = 100.0;
    let err = init_point(&s, &shipped_spec(), &[0.25; 4], Access::Rsma).unwrap_err();
    assert!(matches!(err, ScaError::PowerExhausted { .. }), "{err}");
}

#[test]
fn tangent_is_symmetric_in_scaled_slacks() {
    let s = default_scenario(9);
    let spec = shipped_spec();
    let st = init_point(&s, &spec, &[0.5; 4], Access::Rsma).unwrap();
    let sub = build_subproblem(&s, &spec, &st, &rsma()).unwrap();
    let x = sub.start().unwrap();
    let n = sub.num_variables();
    let mut g = vec![0.0; n];
    for i in 0..sub.num_constraints() {
        if !sub.label(i).starts_with("private_sinr_tangent") {
            continue;
        }
        // With slacks measured in units of their expansion point, both
        // slack coefficients of the tangent reduce to 1/2.
        sub.constraint_gradient(i, &x, &mut g);
        let halves = g.iter().filter(|&&v| v == 0.5).count();
        assert_eq!(halves, 2, "{}: {g:?}", sub.label(i));
        let v = sub.constraint(i, &x);
        assert!(v < 0.0 && v > -1e-3, "{} = {v}", sub.label(i));
    }
}

#[test]
fn subproblem_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (seed, access) in [(1, Access::Rsma), (2, Access::Sdma), (3, Access::Rsma)] {
        let s = default_scenario(seed);
        let spec = shipped_spec();
        let opts = ScaOptions {
            access,
            ..ScaOptions::default()
        };
        let st = init_point(&s, &spec, &[0.6, 0.5, 0.4, 0.3], access).unwrap();
        let sub = build_subproblem(&s, &spec, &st, &opts).unwrap();
        let x0 = sub.start().unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = x0.iter().map(|v| v * (1.0 + 0.05 * rng.random_range(-1.0..1.0))).collect();
            let chk = check_derivatives(&sub, &x, 1e-6);
            assert!(chk.max_error() < 1e-5, "{chk:?}");
        }
    }
}

#[test]
fn trace_is_monotone_and_iterates_are_conservative() {
    let spec = shipped_spec();
    for seed in 1..=3 {
        let s = default_scenario(seed);
        for opts in [rsma(), sdma()] {
            let out = sca_iterate(&s, &spec, &[0.5; 4], &opts).unwrap();
            let objs: Vec<f64> = out.trace.iter().map(|t| t.objective_bps).collect();
            assert_monotone(&objs);
            for step in &out.trace[1..] {
                assert!(step.inner_gap <= 1e-6, "inner gap {}", step.inner_gap);
            }
            assert!(out.converged);
            let rep = check_feasibility(&s, &spec, &out.allocation, FEASIBILITY_TOL).unwrap();
            assert!(rep.feasible, "{:?}", rep.violated(FEASIBILITY_TOL));
            assert_eq!(out.allocation.ratios, vec![0.5; 4]);
        }
    }
}

#[test]
fn sdma_result_has_no_common_stream() {
    let s = default_scenario(4);
    let out = sca_iterate(&s, &shipped_spec(), &[0.7; 4], &sdma()).unwrap();
    assert!(out.allocation.common_beam.iter().all(|z| z.norm() == 0.0));
    assert!(out.allocation.rate_split.iter().all(|&a| a == 0.0));
}

#[test]
fn literal_dc_split_is_also_conservative() {
    let s = default_scenario(6);
    let spec = shipped_spec();
    let opts = ScaOptions {
        dc_split: DcSplit::Literal,
        ..ScaOptions::default()
    };
    let out = sca_iterate(&s, &spec, &[0.5; 4], &opts).unwrap();
    let objs: Vec<f64> = out.trace.iter().map(|t| t.objective_bps).collect();
    assert_monotone(&objs);
    assert!(out.trace[1..].iter().all(|t| t.inner_gap <= 1e-6));
}

#[test]
fn phase_rotation_leaves_rates_unchanged() {
    let s = default_scenario(8);
    let spec = shipped_spec();
    let out = sca_iterate(&s, &spec, &[0.5; 4], &rsma()).unwrap();
    let before = evaluate(&s, &spec, &out.allocation).unwrap();
    let mut a = out.allocation.clone();
    for (k, w) in a.private_beams.iter_mut().enumerate() {
        let rot = Complex::from_polar(1.0, 0.7 + k as f64);
        w.iter_mut().for_each(|z| *z *= rot);
    }
    a.common_beam.iter_mut().for_each(|z| *z *= Complex::from_polar(1.0, -2.1));
    let after = evaluate(&s, &spec, &a).unwrap();
    let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= 1e-10 * p.abs().max(1.0));
    assert!(close(&before.private_rates, &after.private_rates));
    assert!(close(&before.common_rates, &after.common_rates));
    assert!(close(&before.semantic_rates, &after.semantic_rates));
    rotate_private_phases(&s, &mut a);
    let again = evaluate(&s, &spec, &a).unwrap();
    assert!(close(&before.semantic_rates, &again.semantic_rates));
}

#[test]
fn single_user_reaches_capacity() {
    let mut s = scenario(1, 1, 11);
    s.max_power_w = 100.0;
    s.comp_power_coeff = 0.0;
    let spec = shipped_spec();
    let h2 = s.channels[0][0].norm_sqr();
    let capacity = s.bandwidth_hz * (1.0 + s.max_power_w * h2 / s.noise_power_w).log2();
    for opts in [sdma(), rsma()] {
        let out = sca_iterate(&s, &spec, &[1.0], &opts).unwrap();
        let delivered = out.report.private_rates[0] + out.allocation.rate_split[0];
        assert!(delivered <= capacity * (1.0 + 1e-9));
        assert!(delivered >= capacity * (1.0 - 1e-3), "{delivered} vs {capacity}");
    }
}

#[test]
fn random_restarts_agree() {
    let s = default_scenario(12);
    let spec = shipped_spec();
    let rho = [0.5; 4];
    let base = init_point(&s, &spec, &rho, Access::Rsma).unwrap().point;
    let mut objs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = base.clone();
        for w in a.private_beams.iter_mut().chain(std::iter::once(&mut a.common_beam)) {
            for z in w.iter_mut() {
                let n = Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                *z += n * (z.norm() * 0.5);
            }
        }
        let out = sca_iterate_from(&s, &spec, &a, &rsma()).unwrap();
        objs.push(out.objective_bps());
    }
    let hi = objs.iter().cloned().fold(f64::MIN, f64::max);
    let lo = objs.iter().cloned().fold(f64::MAX, f64::min);
    assert!((hi - lo) / hi < 0.01, "spread {lo}..{hi}");
}

#[test]
fn flipped_tangent_is_detected() {
    let s = default_scenario(2);
    let spec = shipped_spec();
    let opts = ScaOptions {
        fault_flip_tangent: true,
        ..ScaOptions::default()
    };
    let flagged = match sca_iterate(&s, &spec, &[0.5; 4], &opts) {
        Err(_) => true,
        Ok(out) => {
            let objs: Vec<f64> = out.trace.iter().map(|t| t.objective_bps).collect();
            let falls = objs.windows(2).any(|w| w[1] < w[0] - 1e-8 * (1.0 + w[0].abs()));
            falls || out.trace[1..].iter().any(|t| t.inner_gap > 1e-6) || out.stopped_early.is_some()
        }
    };
    assert!(flagged);
}

#[test]
fn trace_exports_as_csv() {
    let s = default_scenario(1);
    let out = sca_iterate(&s, &shipped_spec(), &[0.5; 4], &sdma()).unwrap();
    let csv = trace_csv(&out.trace);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
    assert_eq!(lines.count(), out.trace.len());
}
