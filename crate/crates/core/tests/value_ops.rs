use nalgebra::{dvector, DVector};
use ocp_core::systems;
use ocp_core::value::{
    level_set_sample_with, properness_scan, value_at, LevelOptions, LevelSetCloud, PropernessScan,
    Value,
};

#[test]
fn properness_working_example_diverges() {
    let sys = systems::working();
    let scan = properness_scan(
        &sys,
        &dvector![1.0, 0.1],
        &dvector![1.0, 0.0],
        &[1e-2, 1e-3, 1e-4],
    )
    .unwrap();
    let big = scan
        .row(1e-2)
        .and_then(|r| r.pnorm)
        .expect("delta 1e-2 solved");
    let small = scan
        .row(1e-4)
        .and_then(|r| r.pnorm)
        .expect("delta 1e-4 solved");
    assert!(small / big > 10.0, "{small} / {big}");
    let proj = scan.row(1e-4).and_then(|r| r.p0proj).unwrap();
    assert!(proj.abs() < 1e-2, "{proj}");
    let mid = scan.row(1e-3).and_then(|r| r.p0proj).unwrap();
    let first = scan.row(1e-2).and_then(|r| r.p0proj).unwrap();
    assert!(first.abs() > mid.abs() && mid.abs() > proj.abs());
}

#[test]
fn properness_single_integrator_bounded() {
    let sys = systems::single_integrator(2);
    let scan = properness_scan(
        &sys,
        &dvector![1.0, 0.1],
        &dvector![1.0, 0.0],
        &[1e-2, 1e-3, 1e-4],
    )
    .unwrap();
    let big = scan.row(1e-2).and_then(|r| r.pnorm).unwrap();
    let small = scan.row(1e-4).and_then(|r| r.pnorm).unwrap();
    assert!(small / big < 2.0);
}

#[test]
fn properness_csv_round_trip() {
    let sys = systems::single_integrator(2);
    let scan =
        properness_scan(&sys, &dvector![0.5, 0.0], &dvector![0.0, 1.0], &[0.1, 0.2]).unwrap();
    let rows = PropernessScan::rows_from_csv(&scan.to_csv()).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, back) in scan.rows.iter().zip(&rows) {
        assert_eq!(row.delta, back.0);
        assert_eq!(row.target, back.1);
        assert_eq!(row.pnorm.unwrap(), back.2);
        assert_eq!(row.p0proj.unwrap(), back.3);
    }
}

fn small_cloud() -> LevelSetCloud {
    let sys = systems::working();
    let opts = LevelOptions {
        focus: false,
        cross_check: false,
        ..LevelOptions::default()
    };
    level_set_sample_with(&sys, 1.0, 16, &opts).unwrap()
}

#[test]
fn level_set_contains_lambda_zero_point() {
    let cloud = small_cloud();
    // p(0) = (0, 1) gives u = 1 with no drift coupling.
    let hit = cloud
        .points
        .iter()
        .find(|p| (&p.endpoint - dvector![4.0 / 3.0, 1.0]).norm() < 1e-6)
        .expect("lambda = 0 point");
    assert!((hit.cost - 1.0).abs() < 1e-8);
    assert!((&hit.p0 - dvector![0.0, 1.0]).norm() < 1e-6);
}

#[test]
fn level_set_is_symmetric_in_y() {
    let cloud = small_cloud();
    for p in &cloud.points {
        let mirror = DVector::from_vec(vec![p.endpoint[0], -p.endpoint[1]]);
        let d = cloud
            .points
            .iter()
            .map(|q| (&q.endpoint - &mirror).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(d < 1e-9, "{} has no mirror ({d})", p.endpoint);
    }
}

#[test]
fn level_set_csv_round_trip() {
    let cloud = small_cloud();
    let back = LevelSetCloud::points_from_csv(&cloud.to_csv()).unwrap();
    assert_eq!(back, cloud.points);
}

#[test]
fn level_set_rejects_bad_level() {
    assert!(level_set_sample_with(&systems::working(), -1.0, 8, &LevelOptions::default()).is_err());
}

#[test]
fn value_marks_unreachable_targets() {
    let sys = systems::working();
    let res = value_at(&sys, &dvector![0.5, 0.2]).unwrap();
    assert_eq!(res.value, Value::Unreachable);
}
