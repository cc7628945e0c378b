//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ocp_core::dynamics::{endpoint, variational_jacobian, AffineSystem, ControlGrid};
use ocp_core::extremal::{
    kalman_regularity, lagrange_multipliers, normal_flow, phi, KalmanVerdict, MultiplierClass,
};
use ocp_core::field::{lie_bracket, ExprField, VectorField};
use ocp_core::linalg;
use ocp_core::systems;
use ocp_core::value::{
    level_set_sample, loglog_slope, properness_scan, tangency_fit, value_at, LevelSetCloud,
    PointFlag,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_control(r: &mut ChaCha8Rng, k: usize, m: usize, bound: f64) -> ControlGrid {
    let flat = DVector::from_fn(k * m, |_, _| r.gen_range(-bound..bound));
    ControlGrid::from_flat(k, m, 1.0, &flat)
}

fn jacobian_fidelity() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for sys in systems::all_builtins() {
        for _ in 0..3 {
            let u = random_control(&mut r, 16, sys.m(), 2.0);
            let (de, _) = variational_jacobian(&sys, &u).map_err(|e| e.to_string())?;
            let flat = u.flat();
            let mut fd = DMatrix::zeros(sys.n(), flat.len());
            for j in 0..flat.len() {
                let h = 1e-6 * (1.0 + flat[j].abs());
                let mut up = flat.clone();
                let mut um = flat.clone();
                up[j] += h;
                um[j] -= h;
                let ep = endpoint(&sys, &ControlGrid::from_flat(16, sys.m(), 1.0, &up))
                    .map_err(|e| e.to_string())?;
                let em = endpoint(&sys, &ControlGrid::from_flat(16, sys.m(), 1.0, &um))
                    .map_err(|e| e.to_string())?;
                fd.set_column(j, &((ep - em) / (2.0 * h)));
            }
            let err = (&de - &fd).amax() / fd.amax().max(1e-300);
            worst = worst.max(err);
        }
    }
    check(
        worst < 1e-5,
        format!("max relative error {worst:.3e} over 4 systems x 3 controls"),
    )
}

fn closed_forms() -> Outcome {
    let sys = systems::working();
    let mut worst: f64 = 0.0;
    for c in [-1.0, 0.5, 2.0] {
        let u = ControlGrid::constant(sys.settings.intervals, 1.0, &[c]);
        let x = endpoint(&sys, &u).map_err(|e| e.to_string())?;
        worst = worst.max((x - dvector![1.0 + c * c / 3.0, c]).amax());
    }
    check(worst < 1e-8, format!("max endpoint error {worst:.3e}"))
}

fn explosion() -> Outcome {
    let sys = systems::riccati();
    let u = ControlGrid::constant(sys.settings.intervals, sys.horizon(), &[1.0]);
    match endpoint(&sys, &u) {
        Ok(x) => Err(format!("no explosion, endpoint {x}")),
        Err(e) => match e.explosion_time() {
            Some(t) => check(t > 1.50 && t < 1.65, format!("guard at t* = {t:.6}")),
            None => Err(format!("unexpected error {e}")),
        },
    }
}

/// Sphere points of the lambda < 0 region in the strip 0.05 <= |y| <= 0.2.
fn strip(cloud: &LevelSetCloud) -> Vec<(f64, f64)> {
    cloud
        .sphere_points()
        .filter(|p| p.p0[0] < 0.0 && (0.05..=0.2).contains(&p.endpoint[1].abs()))
        .map(|p| (p.endpoint[0], p.endpoint[1]))
        .collect()
}

fn asymptotic_constant(cloud: &LevelSetCloud, secs: f64) -> Outcome {
    let pts = strip(cloud);
    if pts.len() < 8 {
        return Err(format!("only {} points in the strip", pts.len()));
    }
    let worst = pts
        .iter()
        .map(|(x, y)| (4.0 * cloud.r * (x - 1.0) / y.powi(4) - 1.0).abs())
        .fold(0.0, f64::max);
    let pairs: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (y.abs(), x - 1.0)).collect();
    let slope = loglog_slope(&pairs).ok_or("no slope")?;
    check(
        worst < 0.05 && (slope - 4.0).abs() <= 0.05 && secs < 60.0,
        format!(
            "{} points, max |4r(x-1)/y^4 - 1| = {worst:.3e}, slope {slope:.4}, {secs:.1} s",
            pts.len()
        ),
    )
}

fn tangency(cloud: &LevelSetCloud) -> Outcome {
    let rep = tangency_fit(cloud, &dvector![1.0, 0.0], &dvector![1.0, 0.0]);
    let windows: Vec<String> = rep
        .windows
        .iter()
        .map(|w| match w.max_angle_deg {
            Some(a) => format!("{}:{}@{a:.3e}deg", w.radius, w.count),
            None => format!("{}:empty", w.radius),
        })
        .collect();
    let smallest_empty = rep.windows.last().is_some_and(|w| w.count == 0);
    let angle = rep.final_angle_deg.unwrap_or(f64::INFINITY);
    let detail = format!(
        "{}; final window {:?}{}",
        windows.join(" "),
        rep.smallest_nonempty,
        if smallest_empty {
            " (smallest windows empty)"
        } else {
            ""
        }
    );
    check(rep.monotone && angle < 2.0, detail)
}

fn non_properness() -> Outcome {
    let deltas = [1e-2, 1e-3, 1e-4];
    let sys = systems::working();
    let scan = properness_scan(&sys, &dvector![1.0, 0.1], &dvector![1.0, 0.0], &deltas)
        .map_err(|e| e.to_string())?;
    let norm = |s: &ocp_core::value::PropernessScan, d: f64| s.row(d).and_then(|r| r.pnorm);
    let (Some(a), Some(b)) = (norm(&scan, 1e-2), norm(&scan, 1e-4)) else {
        return Err("shooting failed on the working example".into());
    };
    let proj = scan.row(1e-4).and_then(|r| r.p0proj).unwrap_or(f64::NAN);
    let ctl = systems::single_integrator(2);
    let cscan = properness_scan(&ctl, &dvector![1.0, 0.1], &dvector![1.0, 0.0], &deltas)
        .map_err(|e| e.to_string())?;
    let (Some(ca), Some(cb)) = (norm(&cscan, 1e-2), norm(&cscan, 1e-4)) else {
        return Err("shooting failed on the control case".into());
    };
    let ratio = b / a;
    let cratio = cb / ca;
    check(
        ratio > 10.0 && proj.abs() < 1e-2 && cratio < 2.0,
        format!("ratio {ratio:.1} (|p| {a:.3e} -> {b:.3e}), p0proj {proj:.3e}, control case ratio {cratio:.4}"),
    )
}

fn corank() -> Outcome {
    let sys = systems::working();
    let rep = lagrange_multipliers(&sys, &sys.zero_control()).map_err(|e| e.to_string())?;
    let ratio = rep.singular_values[1] / rep.singular_values[0];
    let ab: Vec<_> = rep.abnormal().collect();
    let mult_ok =
        ab.len() == 1 && (&ab[0].p_t - dvector![1.0, 0.0]).norm() < 1e-12 && ab[0].p0 == 0.0;
    check(
        ratio < 1e-8 && mult_ok && rep.corank == 1,
        format!(
            "sigma2/sigma1 = {ratio:.3e}, corank {}, abnormal multipliers {}",
            rep.corank,
            ab.iter()
                .map(|s| format!("(({},{}),{})", s.p_t[0], s.p_t[1], s.p0))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn kalman() -> Outcome {
    let di = kalman_regularity(&systems::double_integrator()).map_err(|e| e.to_string())?;
    let drift = ExprField::parse(&["0", "0"], 2).unwrap();
    let b = ExprField::parse(&["1", "0"], 2).unwrap();
    let single = AffineSystem::new("rank-one", drift, vec![b], 1.0).unwrap();
    let r1 = kalman_regularity(&single).map_err(|e| e.to_string())?;
    check(
        di.verdict == KalmanVerdict::Regular
            && di.rank == Some(2)
            && r1.verdict == KalmanVerdict::AbnormalCandidate
            && r1.rank == Some(1),
        format!(
            "double integrator {} rank {:?}; A=0, B rank 1: {} rank {:?}",
            di.verdict.as_str(),
            di.rank,
            r1.verdict.as_str(),
            r1.rank
        ),
    )
}

fn fields(sys: &AffineSystem) -> Vec<Arc<dyn VectorField>> {
    sys.fields()
        .iter()
        .map(|f| Arc::new(f.clone()) as Arc<dyn VectorField>)
        .collect()
}

fn bracket_oracle() -> Outcome {
    let mut r = rng(9);
    let h = fields(&systems::heisenberg());
    let mf = fields(&systems::martinet_flat());
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let x = DVector::from_fn(3, |_, _| r.gen_range(-2.0..2.0));
        let eval = |f: &dyn VectorField| f.value(&x).expect("finite");
        let h12 = Arc::new(lie_bracket(h[0].clone(), h[1].clone()));
        e1 = e1.max((eval(h12.as_ref()) - dvector![0.0, 0.0, 1.0]).amax());
        let hh = lie_bracket(h[1].clone(), h12.clone());
        e2 = e2.max(eval(&hh).amax());
        let m12 = Arc::new(lie_bracket(mf[0].clone(), mf[1].clone()));
        e1 = e1.max((eval(m12.as_ref()) - dvector![0.0, 0.0, -x[1]]).amax());
        let m212 = lie_bracket(mf[1].clone(), m12.clone());
        e2 = e2.max((eval(&m212) - dvector![0.0, 0.0, -1.0]).amax());
        let m112 = lie_bracket(mf[0].clone(), m12.clone());
        e2 = e2.max(eval(&m112).amax());
    }
    check(
        e1 < 1e-8 && e2 < 1e-5,
        format!("k=1 max error {e1:.3e}, k=2 max error {e2:.3e} at 20 points"),
    )
}

fn cross_solver() -> Outcome {
    let sys = systems::working();
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 10 {
        let p0 = dvector![
            r.gen_range(-1.5..1.5),
            r.gen_range(0.3..1.2) * if r.gen_bool(0.5) { 1.0 } else { -1.0 }
        ];
        let Ok(x) = ocp_core::extremal::exp_map(&sys, &p0) else {
            continue;
        };
        let res = value_at(&sys, &x).map_err(|e| e.to_string())?;
        let (Some(s), Some(d)) = (res.shooting_cost, res.direct_cost) else {
            return Err(format!(
                "target {x}: shooting {:?}, direct {:?}",
                res.shooting_cost, res.direct_cost
            ));
        };
        worst = worst.max((s - d).abs() / s.max(d));
        tested += 1;
    }
    check(
        worst < 1e-3,
        format!("10 targets, max relative gap {worst:.3e}"),
    )
}

fn property_suites(cloud: &LevelSetCloud) -> Outcome {
    let mut r = rng(11);
    let mut lines = Vec::new();
    let mut ok = true;

    let (mut drift, mut law): (f64, f64) = (0.0, 0.0);
    for sys in systems::all_builtins() {
        for _ in 0..10 {
            let p0 = DVector::from_fn(sys.n(), |_, _| r.gen_range(-5.7..5.7));
            let arc = normal_flow(&sys, &p0).map_err(|e| e.to_string())?;
            let h = arc.hamiltonian(&sys).map_err(|e| e.to_string())?;
            drift = drift.max(h.iter().map(|v| (v - h[0]).abs()).fold(0.0, f64::max));
            law = law.max(arc.control_law_residual(&sys).map_err(|e| e.to_string())?);
        }
    }
    ok &= drift < 1e-8 && law < 1e-12;
    lines.push(format!(
        "hamiltonian drift {drift:.2e}, control law {law:.2e}"
    ));

    let mut sym: f64 = 0.0;
    for p in &cloud.points {
        let d = cloud
            .points
            .iter()
            .map(|q| {
                ((q.endpoint[0] - p.endpoint[0]).abs()).max((q.endpoint[1] + p.endpoint[1]).abs())
            })
            .fold(f64::INFINITY, f64::min);
        sym = sym.max(d);
    }
    ok &= sym < 1e-9;
    lines.push(format!("y-symmetry {sym:.2e}"));

    let sys = systems::working();
    let mut angle: f64 = 0.0;
    let mut open_ok = 0;
    let mut open_total = 0;
    for _ in 0..5 {
        let p0 = dvector![r.gen_range(-1.0..1.0), r.gen_range(0.4..1.0)];
        let u = phi(&sys, &p0).map_err(|e| e.to_string())?;
        let arc = normal_flow(&sys, &p0).map_err(|e| e.to_string())?;
        let rep = lagrange_multipliers(&sys, &u).map_err(|e| e.to_string())?;
        let best = rep
            .solutions
            .iter()
            .find(|s| s.classification == MultiplierClass::RegularConsistent)
            .ok_or("no regular multiplier")?;
        let expect =
            DVector::from_vec(vec![arc.final_covector()[0], arc.final_covector()[1], -0.5]);
        angle = angle.max(linalg::line_angle(&best.stacked(), &expect));
        if rep.corank == 0 {
            for _ in 0..10 {
                let du = random_control(&mut r, u.intervals(), 1, 1e-2);
                let v = ControlGrid::from_flat(u.intervals(), 1, 1.0, &(u.flat() + du.flat()));
                let (de, _) = variational_jacobian(&sys, &v).map_err(|e| e.to_string())?;
                open_total += 1;
                if linalg::rank(&de, sys.settings.rank_tol) == 2 {
                    open_ok += 1;
                }
            }
        }
    }
    ok &= angle < 1e-3 && open_total == 50 && open_ok == 50;
    lines.push(format!(
        "multiplier angle {angle:.2e} rad, regular after {open_ok}/{open_total} perturbations"
    ));
    check(ok, lines.join("; "))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let out = f();
        results.push((id, name, out, t.elapsed().as_secs_f64()));
    };

    timed(1, "jacobian fidelity", &|| {
        let t = Instant::now();
        jacobian_fidelity().and_then(|d| {
            let s = t.elapsed().as_secs_f64();
            check(s < 5.0, format!("{d}, {s:.2} s"))
        })
    });
    timed(2, "working-example closed forms", &|| {
        let t = Instant::now();
        closed_forms().and_then(|d| {
            let s = t.elapsed().as_secs_f64();
            check(s < 1.0, format!("{d}, {s:.3} s"))
        })
    });
    timed(3, "explosion detection", &explosion);

    let t = Instant::now();
    let cloud = level_set_sample(&systems::working(), 1.0, 256);
    let cloud_secs = t.elapsed().as_secs_f64();
    match &cloud {
        Ok(c) => {
            let fronts = c
                .points
                .iter()
                .filter(|p| p.flag == PointFlag::Front)
                .count();
            println!(
                "level set r=1: {} directions ({} focused, {} delayed), {} points, {} wave-front, {} rays without a root, {} unresolved roots, {cloud_secs:.1} s",
                c.count, c.focused, c.delayed, c.points.len(), fronts, c.skipped, c.unresolved
            );
        }
        Err(e) => println!("level set failed: {e}"),
    }
    let cloud = cloud.map_err(|e| e.to_string());
    timed(4, "asymptotic constant", &|| {
        asymptotic_constant(cloud.as_ref()?, cloud_secs)
    });
    timed(5, "tangency", &|| tangency(cloud.as_ref()?));
    timed(6, "non-properness", &non_properness);
    timed(7, "corank classification", &corank);
    timed(8, "kalman", &kalman);
    timed(9, "bracket oracle", &bracket_oracle);
    timed(10, "cross-solver agreement", &cross_solver);
    timed(11, "property suites", &|| property_suites(cloud.as_ref()?));

    let mut failed = 0;
    for (id, name, out, secs) in &results {
        let (tag, detail) = match out {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {id:>2} {name:<30} [{secs:6.2} s] {detail}");
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
