use nalgebra::{dvector, DVector};
use proptest::prelude::*;

use ocp_core::dynamics::{endpoint, variational_jacobian, ControlGrid};
use ocp_core::extremal::{exp_map, lagrange_multipliers, normal_flow, phi, shoot, MultiplierClass};
use ocp_core::linalg;
use ocp_core::systems;
use ocp_core::value::{level_set_sample_with, value_at, LevelOptions};

fn covector(n: usize, bound: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-bound..bound, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hamiltonian_is_conserved(idx in 0usize..6, raw in prop::collection::vec(-5.7f64..5.7, 3)) {
        let all = systems::all_builtins();
        let sys = &all[idx % all.len()];
        let p0 = DVector::from_fn(sys.n(), |i, _| raw[i % raw.len()]);
        let arc = normal_flow(sys, &p0).unwrap();
        let h = arc.hamiltonian(sys).unwrap();
        let drift = h.iter().map(|v| (v - h[0]).abs()).fold(0.0, f64::max);
        prop_assert!(drift < 1e-8, "drift {drift}");
        prop_assert!(arc.control_law_residual(sys).unwrap() < 1e-12);
    }

    #[test]
    fn working_flow_is_mirror_symmetric(p0 in covector(2, 3.0)) {
        let sys = systems::working();
        let a = exp_map(&sys, &p0).unwrap();
        let b = exp_map(&sys, &dvector![p0[0], -p0[1]]).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-12 * (1.0 + a[0].abs()));
        prop_assert!((a[1] + b[1]).abs() < 1e-12 * (1.0 + a[1].abs()));
    }

    #[test]
    fn working_endpoint_never_left_of_start(u in prop::collection::vec(-3.0f64..3.0, 16)) {
        let sys = systems::working();
        let grid = ControlGrid::from_flat(16, 1, 1.0, &DVector::from_vec(u));
        prop_assert!(endpoint(&sys, &grid).unwrap()[0] >= 1.0 - 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn multipliers_match_the_normal_covector(px in -1.0f64..1.0, py in 0.4f64..1.0) {
        let sys = systems::working();
        let p0 = dvector![px, py];
        let u = phi(&sys, &p0).unwrap();
        let arc = normal_flow(&sys, &p0).unwrap();
        let rep = lagrange_multipliers(&sys, &u).unwrap();
        let best = rep
            .solutions
            .iter()
            .find(|s| s.classification == MultiplierClass::RegularConsistent)
            .expect("regular multiplier");
        let pt = arc.final_covector();
        let expect = dvector![pt[0], pt[1], -0.5];
        prop_assert!(linalg::line_angle(&best.stacked(), &expect) < 1e-3);
    }

    #[test]
    fn regularity_is_open(py in 0.4f64..1.0, du in prop::collection::vec(-1e-2f64..1e-2, 64)) {
        let sys = systems::working();
        let u = phi(&sys, &dvector![0.2, py]).unwrap();
        let v = ControlGrid::from_flat(u.intervals(), 1, 1.0, &(u.flat() + DVector::from_vec(du)));
        let (de, _) = variational_jacobian(&sys, &v).unwrap();
        prop_assert_eq!(linalg::rank(&de, sys.settings.rank_tol), 2);
    }

    #[test]
    fn shooting_reproduces_its_target(p0 in covector(3, 1.0)) {
        let sys = systems::heisenberg();
        let target = exp_map(&sys, &p0).unwrap();
        let rep = shoot(&sys, &target, &[]);
        prop_assert!(!rep.solutions.is_empty());
        for s in &rep.solutions {
            let x = exp_map(&sys, &s.p0).unwrap();
            prop_assert!((&x - &target).norm() < 1e-8 * (1.0 + target.norm()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn value_never_exceeds_a_known_cost(px in -0.5f64..0.5, py in -1.0f64..1.0) {
        let sys = systems::working();
        let p0 = dvector![px, py];
        let u = phi(&sys, &p0).unwrap();
        let x = endpoint(&sys, &u).unwrap();
        let v = value_at(&sys, &x).unwrap().value.finite().expect("reachable");
        prop_assert!(v <= u.cost() + 1e-6, "S = {v}, cost = {}", u.cost());
    }
}

#[test]
fn cloud_stays_inside_the_guard_ball() {
    let sys = systems::working();
    let opts = LevelOptions {
        focus: false,
        cross_check: false,
        ..LevelOptions::default()
    };
    let cloud = level_set_sample_with(&sys, 0.5, 24, &opts).unwrap();
    assert!(!cloud.points.is_empty());
    for p in &cloud.points {
        assert!(p.endpoint.norm() < sys.guard_radius());
        assert!((p.cost - 0.5).abs() <= sys.settings.level_tol * 0.5 * 10.0);
    }
}
