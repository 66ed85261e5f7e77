use nalgebra::dvector;
use proptest::prelude::*;

use routh::harness::experiments::three_body_routh;
use routh::harness::sampling::ProbeSampler;
use routh::harness::three_body::{build_three_body, ThreeBody, ThreeBodyParams};
use routh::numcore::DerivativeMode;

fn tb() -> ThreeBody {
    build_three_body(ThreeBodyParams::default()).unwrap()
}

#[test]
fn mechanical_connection_coefficients() {
    let tb = tb();
    let g = tb.mechanical.gamma(&dvector![0.0, 0.4, -1.1]).unwrap();
    assert!((g[(0, 0)] - 5.0 / 6.0).abs() < 1e-14);
    assert!((g[(0, 1)] - 0.5).abs() < 1e-14);
}

#[test]
fn full_lagrangian_derivatives_match_differences() {
    let tb = tb();
    for s in ProbeSampler::new(42).three_body_states(100) {
        let cc = tb.system.lagrangian.cross_check(&s).unwrap();
        assert!(cc.gradient.unwrap() < 1e-6 && cc.hessian.unwrap() < 1e-6, "{cc:?}");
    }
}

#[test]
fn routhian_energy_is_conserved_by_the_reduced_flow() {
    let tb = tb();
    let rr = three_body_routh(&tb, "A0", 0.5).unwrap();
    let traj = routh::harness::integrators::integrate_rk4(&rr.reduced, &dvector![0.3, -0.2, 0.1, 0.05], 1e-2, 2.0).unwrap();
    let e0 = rr.reduced.energy(&traj.states[0]).unwrap();
    for s in &traj.states {
        assert!((rr.reduced.energy(s).unwrap() - e0).abs() < 1e-8);
    }
}

#[test]
fn difference_mode_transformation_agrees_with_exact() {
    let tb = tb();
    let ct = three_body_routh(&tb, "A0", 0.5).unwrap().transformation;
    let fd = ct.clone().with_mode(DerivativeMode::FiniteDifference);
    for s in ProbeSampler::new(5).intermediate_states(10) {
        let (_, a) = ct.psi_jacobian(&s).unwrap();
        let (_, b) = fd.psi_jacobian(&s).unwrap();
        assert!((a - b).abs().max() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn momentum_level_state_has_requested_momentum(
        phi in -3.0..3.0_f64, psi in -3.0..3.0_f64, a in -2.0..2.0_f64, b in -2.0..2.0_f64, mu in -2.0..2.0_f64,
    ) {
        let p = ThreeBodyParams::default();
        let s = p.state_on_level(0.2, phi, psi, a, b, mu);
        prop_assert!((p.momentum(&s) - mu).abs() < 1e-12);
    }

    #[test]
    fn reduced_lagrangian_is_independent_of_the_group_angle(
        phi in -3.0..3.0_f64, psi in -3.0..3.0_f64, a in -2.0..2.0_f64, b in -2.0..2.0_f64, th in -3.0..3.0_f64,
    ) {
        let rr = three_body_routh(&tb(), "mechanical", 0.5).unwrap();
        let base = rr.intermediate.lagrangian.value(&dvector![phi, psi, a, b, 0.0]).unwrap();
        let moved = rr.intermediate.lagrangian.value(&dvector![phi, psi, a, b, th]).unwrap();
        prop_assert!((base - moved).abs() < 1e-12);
    }
}
