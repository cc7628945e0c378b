//! Level sets `S^{-1}(r)` sampled along rays of initial covectors.

use nalgebra::DVector;
use serde::Serialize;

use super::ValueError;
use crate::csvio::{self, CsvError};
use crate::dynamics::{variational_jacobian, AffineSystem};
use crate::extremal::{
    flow_end, multipliers_from, projectivize, shoot_with, steps_for, ShootOptions, NORMAL_P0,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointFlag {
    /// No cheaper control was found.
    Sphere,
    /// A cheaper normal extremal reaches the same point.
    Front,
}

impl PointFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            PointFlag::Sphere => "sphere",
            PointFlag::Front => "front",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudPoint {
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub endpoint: DVector<f64>,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub p0: DVector<f64>,
    pub cost: f64,
    pub pnorm: f64,
    /// Cost coordinate of the projectivized multiplier `(p(T), -1/2)`.
    pub p0proj: f64,
    pub flag: PointFlag,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSetCloud {
    pub system: String,
    pub horizon: f64,
    pub r: f64,
    pub count: usize,
    /// Directions concentrated around abnormal covectors.
    pub focused: usize,
    /// Directions along which the cost never reached `r`.
    pub skipped: usize,
    /// Directions starting part way along an abnormal trajectory.
    pub delayed: usize,
    /// Roots dropped because halving the flow step moved them.
    pub unresolved: usize,
    pub s_max: f64,
    pub level_tol: f64,
    pub points: Vec<CloudPoint>,
}

impl LevelSetCloud {
    pub fn sphere_points(&self) -> impl Iterator<Item = &CloudPoint> {
        self.points.iter().filter(|p| p.flag == PointFlag::Sphere)
    }

    /// CSV `x1..xn,p1..pn,cost,pnorm,p0proj,flag`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.endpoint.len());
        let mut header = csvio::numbered_header("x", n);
        header.extend(csvio::numbered_header("p", n));
        header.extend(["cost", "pnorm", "p0proj", "flag"].map(String::from));
        let rows: Vec<(Vec<f64>, String)> = self
            .points
            .iter()
            .map(|p| {
                let mut r: Vec<f64> = p.endpoint.iter().chain(p.p0.iter()).copied().collect();
                r.extend([p.cost, p.pnorm, p.p0proj]);
                (r, p.flag.as_str().to_string())
            })
            .collect();
        csvio::write_table_with_tag(&header, &rows)
    }

    /// Points back from [`LevelSetCloud::to_csv`].
    pub fn points_from_csv(text: &str) -> Result<Vec<CloudPoint>, CsvError> {
        let (header, rows) = csvio::read_table_with_tag(text)?;
        if header.len() < 5 || header.last().map(String::as_str) != Some("flag") {
            return Err(CsvError::Header {
                expected: "x1..,p1..,cost,pnorm,p0proj,flag".into(),
                got: header.join(","),
            });
        }
        let n = (header.len() - 4) / 2;
        rows.into_iter()
            .map(|(r, tag)| {
                let flag = match tag.as_str() {
                    "sphere" => PointFlag::Sphere,
                    "front" => PointFlag::Front,
                    other => return Err(CsvError::Invalid(format!("unknown flag {other:?}"))),
                };
                Ok(CloudPoint {
                    endpoint: DVector::from_column_slice(&r[..n]),
                    p0: DVector::from_column_slice(&r[n..2 * n]),
                    cost: r[2 * n],
                    pnorm: r[2 * n + 1],
                    p0proj: r[2 * n + 2],
                    flag,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LevelOptions {
    /// First scale probed along each ray.
    pub s_min: f64,
    pub s_max: f64,
    /// Add rays clustered around the abnormal covectors of the zero control.
    pub focus: bool,
    /// Shoot each point from nearby cheaper flows to detect the wave front.
    pub cross_check: bool,
    /// Number of cheaper flows used as seeds by the cross-check.
    pub neighbours: usize,
}

impl Default for LevelOptions {
    fn default() -> Self {
        LevelOptions {
            s_min: 1e-2,
            s_max: 1e7,
            focus: true,
            cross_check: true,
            neighbours: 8,
        }
    }
}

pub fn level_set_sample(
    sys: &AffineSystem,
    r: f64,
    count: usize,
) -> Result<LevelSetCloud, ValueError> {
    level_set_sample_with(sys, r, count, &LevelOptions::default())
}

/// Relative covector distance under which a cross-check solution is the
/// point's own extremal.
const SAME_EXTREMAL: f64 = 1e-3;

/// Endpoint shift tolerated when the flow step is halved.
const RESOLUTION_TOL: f64 = 1e-3;

/// One evaluated flow, kept for the cross-check.
struct Probe {
    p: DVector<f64>,
    x: DVector<f64>,
    cost: f64,
}

/// Flow steps used on a delayed-start ray.
const DELAYED_STEPS: usize = 2048;

/// Delayed rays scan up to `s_max` times this factor.
const DELAYED_REACH: f64 = 1e3;

/// Size of the kick along `e` on delayed-start rays.
const KICK: f64 = 1e-300;

/// Where a ray starts. Delayed rays begin at `t1` on the trajectory of an
/// abnormal covector `q0` (zero control), with `frame` the system restricted
/// to `[t1, T]` and `q1` the covector reached at `t1`. The kick `s (q1/|q1| + t e)`
/// stands for the initial covector `s q0 / |q1|` plus a component along `e`
/// that is below the floating-point range at `t = 0`.
struct Start {
    frame: AffineSystem,
    steps: usize,
    q0: DVector<f64>,
    q1: DVector<f64>,
    q1_norm: f64,
}

struct Ray {
    d: DVector<f64>,
    start: Option<usize>,
}

pub fn level_set_sample_with(
    sys: &AffineSystem,
    r: f64,
    count: usize,
    opts: &LevelOptions,
) -> Result<LevelSetCloud, ValueError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(ValueError::Level(r));
    }
    let n = sys.n();
    let foci = if opts.focus {
        abnormal_foci(sys)
    } else {
        Vec::new()
    };
    let steps = steps_for(sys);
    let (rays, starts, focused) = directions(sys, count, &foci);
    let delayed = rays.iter().filter(|r| r.start.is_some()).count();
    let tol = sys.settings.level_tol;

    let mut bank: Vec<Probe> = Vec::new();
    // (initial covector, cost, endpoint, final covector)
    let mut raw: Vec<Root> = Vec::new();
    let mut delayed_roots = Vec::new();
    let mut skipped = 0;
    let mut unresolved = 0;
    for ray in &rays {
        let (frame, fsteps) = match ray.start {
            None => (sys, steps),
            Some(i) => (&starts[i].frame, starts[i].steps),
        };
        let record = ray.start.is_none();
        let roots = ray_roots(frame, &ray.d, r, fsteps, tol, opts, &mut bank, record);
        if roots.is_empty() {
            skipped += 1;
        }
        for root in roots {
            if !resolved(frame, &root, r, fsteps) {
                unresolved += 1;
            } else if let Some(i) = ray.start {
                let st = &starts[i];
                let p0 = &st.q0 * (root.0.norm() / st.q1_norm);
                delayed_roots.push((p0, root.1, root.2, root.3));
            } else {
                raw.push(root);
            }
        }
    }

    for (p, ..) in &raw {
        for f in INWARD {
            let q = p * f;
            if let Ok(end) = flow_end(sys, &q, steps) {
                bank.push(Probe {
                    p: q,
                    x: end.x,
                    cost: end.cost,
                });
            }
        }
    }
    raw.extend(delayed_roots);

    let mut points = Vec::with_capacity(raw.len());
    for (p, cost, x, p_t) in raw {
        let flag =
            if opts.cross_check && cheaper_exists(sys, &x, &p, r, &bank, opts.neighbours, steps) {
                PointFlag::Front
            } else {
                PointFlag::Sphere
            };
        let stacked = DVector::from_fn(n + 1, |i, _| if i < n { p_t[i] } else { NORMAL_P0 });
        let p0proj = projectivize(&stacked)[n];
        points.push(CloudPoint {
            pnorm: p.norm(),
            endpoint: x,
            p0: p,
            cost,
            p0proj,
            flag,
        });
    }
    points.sort_by(|a, b| {
        a.endpoint
            .iter()
            .chain(a.p0.iter())
            .zip(b.endpoint.iter().chain(b.p0.iter()))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(LevelSetCloud {
        system: sys.name.clone(),
        horizon: sys.horizon(),
        r,
        count: rays.len(),
        focused,
        delayed,
        skipped,
        unresolved,
        s_max: opts.s_max,
        level_tol: tol,
        points,
    })
}

/// Abnormal multipliers of the zero control, transported back to `t = 0`.
fn abnormal_foci(sys: &AffineSystem) -> Vec<DVector<f64>> {
    let u = sys.zero_control();
    let Ok((de, frame)) = variational_jacobian(sys, &u) else {
        return Vec::new();
    };
    let report = multipliers_from(sys, &de, &u.cost_gradient(), frame.endpoint);
    let n0 = &frame.n_samples[0];
    report
        .abnormal()
        .filter_map(|s| {
            let q = n0.transpose() * &s.p_t;
            let scale = q.amax();
            if scale == 0.0 {
                return None;
            }
            let q = q.map(|c| if c.abs() < 1e-15 * scale { 0.0 } else { c });
            Some(q.normalize())
        })
        .collect()
}

/// Start times of delayed rays: `T - tau` for `tau = T 2^{-j/2}`.
fn delayed_start(sys: &AffineSystem, q0: &DVector<f64>, j: usize) -> Option<Start> {
    let t = sys.horizon();
    let tau = t * 2f64.powf(-(j as f64) / 2.0);
    let head = sys.clone().with_horizon(t - tau).ok()?;
    let end = flow_end(&head, q0, steps_for(&head).max(64)).ok()?;
    let q1_norm = end.p.norm();
    if !(q1_norm > 0.0) {
        return None;
    }
    let frame = sys.clone().with_x0(end.x).ok()?.with_horizon(tau).ok()?;
    let steps = steps_for(&frame).max(DELAYED_STEPS);
    Some(Start {
        frame,
        steps,
        q0: q0.clone(),
        q1: end.p.normalize(),
        q1_norm,
    })
}

/// Covector rays: a uniform sphere grid, plus (when foci are given) half
/// the budget near each abnormal covector `q`. Of that half, one part are
/// rays `q + t e` from `t = 0` with `t` log-spaced down to 1e-300 and `e`
/// orthogonal to `q`; the other part start later on the abnormal trajectory.
fn directions(
    sys: &AffineSystem,
    count: usize,
    foci: &[DVector<f64>],
) -> (Vec<Ray>, Vec<Start>, usize) {
    let n = sys.n();
    let mut focused = Vec::new();
    let mut starts = Vec::new();
    if !foci.is_empty() && n >= 2 {
        let combos = foci.len() * 2 * 2 * (n - 1);
        let per = (count / 2) / combos;
        let immediate = per - per / 2;
        let later = per / 2;
        let ts: Vec<f64> = (0..immediate)
            .map(|i| {
                if immediate == 1 {
                    1e-1
                } else {
                    10f64.powf(-300.0 + 299.0 * i as f64 / (immediate - 1) as f64)
                }
            })
            .collect();
        for q in foci {
            for sq in [1.0, -1.0] {
                let q = q * sq;
                let perp = orthogonal_complement(&q);
                for e in &perp {
                    for se in [1.0, -1.0] {
                        for &t in &ts {
                            focused.push(Ray {
                                d: (&q + e * (se * t)).normalize(),
                                start: None,
                            });
                        }
                    }
                }
                for j in 2..2 + later {
                    let Some(st) = delayed_start(sys, &q, j) else {
                        continue;
                    };
                    let idx = starts.len();
                    for e in orthogonal_complement(&st.q1) {
                        for se in [1.0, -1.0] {
                            focused.push(Ray {
                                d: &st.q1 + &e * (se * KICK),
                                start: Some(idx),
                            });
                        }
                    }
                    starts.push(st);
                }
            }
        }
    }
    let nf = focused.len();
    let mut rays: Vec<Ray> = uniform_directions(n, count.saturating_sub(nf))
        .into_iter()
        .map(|d| Ray { d, start: None })
        .collect();
    rays.extend(focused);
    (rays, starts, nf)
}

fn orthogonal_complement(q: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = q.len();
    let mut basis: Vec<DVector<f64>> = vec![q.normalize()];
    for i in 0..n {
        let mut v = DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 });
        for b in &basis {
            v -= b * b.dot(&v);
        }
        let vn = v.norm();
        if vn > 1e-8 {
            let v = (v / vn).map(|c| if c.abs() < 1e-15 { 0.0 } else { c });
            basis.push(v.normalize());
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

fn uniform_directions(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        1 => [1.0, -1.0]
            .iter()
            .cycle()
            .take(count)
            .map(|&s| DVector::from_element(1, s))
            .collect(),
        // Angles past pi reuse the mirrored angle so the grid is exactly
        // symmetric under the second coordinate's reflection.
        2 => (0..count)
            .map(|j| {
                let (k, sign) = if 2 * j > count {
                    (count - j, -1.0)
                } else {
                    (j, 1.0)
                };
                let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                let snap = |c: f64| if c.abs() < 1e-15 { 0.0 } else { c };
                DVector::from_vec(vec![snap(th.cos()), sign * snap(th.sin())])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|j| {
                    let z = 1.0 - (2 * j + 1) as f64 / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * j as f64;
                    DVector::from_vec(vec![rho * a.cos(), rho * a.sin(), z])
                })
                .collect()
        }
        _ => crate::extremal::seed_sweep(n, count + 1, 1.0, 1)
            .into_iter()
            .filter(|v| v.norm() > 1e-3)
            .take(count)
            .map(|v| v.normalize())
            .collect(),
    }
}

type Root = (DVector<f64>, f64, DVector<f64>, DVector<f64>);

/// The root must persist when the flow step is halved: re-solve along the
/// same ray on a widening bracket around `s` and require a nearby endpoint.
fn resolved(sys: &AffineSystem, root: &Root, r: f64, steps: usize) -> bool {
    let (p, _, x, _) = root;
    let s = p.norm();
    let d = p / s;
    // Level defect on the fine flow, clamped so exploded flows count as above.
    let fine = |t: f64| match flow_end(sys, &(&d * t), 2 * steps) {
        Ok(e) if e.cost.is_finite() => ((e.cost - r).min(10.0 * r), Some(e.x)),
        _ => (10.0 * r, None),
    };
    let mut width = 1e-3;
    let bracket = loop {
        let (lo, hi) = (s * (1.0 - width), s * (1.0 + width));
        let (f_lo, f_hi) = (fine(lo).0, fine(hi).0);
        if f_lo < 0.0 && f_hi > 0.0 {
            break Some((lo, hi, f_lo, f_hi));
        }
        if width >= 0.5 {
            break None;
        }
        width = (width * 4.0).min(0.5);
    };
    let Some((mut lo, mut hi, mut f_lo, mut f_hi)) = bracket else {
        return false;
    };
    // Illinois iteration.
    let mut side = 0;
    for _ in 0..100 {
        let t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let (f, xe) = fine(t);
        if f.abs() <= 1e-9 * r || hi - lo <= 1e-15 * hi {
            return xe.map_or(false, |xe| {
                (&xe - x).norm() <= RESOLUTION_TOL * (1.0 + x.norm())
            });
        }
        if f < 0.0 {
            lo = t;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    false
}

/// Inward scales along each accepted ray added to the cross-check bank.
const INWARD: [f64; 6] = [0.5, 0.7, 0.8, 0.9, 0.95, 0.99];

/// Every scale `s` with `cost(flow(s d)) = r`, found by a doubling scan
/// followed by bisection of each sign change.
fn ray_roots(
    sys: &AffineSystem,
    d: &DVector<f64>,
    r: f64,
    steps: usize,
    tol: f64,
    opts: &LevelOptions,
    bank: &mut Vec<Probe>,
    record: bool,
) -> Vec<Root> {
    let s_max = if record {
        opts.s_max
    } else {
        opts.s_max * DELAYED_REACH
    };
    // `None` marks an exploded flow, treated as above the level.
    let mut eval = |s: f64, bank: &mut Vec<Probe>| -> Option<(f64, DVector<f64>, DVector<f64>)> {
        let p = d * s;
        let end = flow_end(sys, &p, steps).ok()?;
        if !end.cost.is_finite() {
            return None;
        }
        if record {
            bank.push(Probe {
                p,
                x: end.x.clone(),
                cost: end.cost,
            });
        }
        Some((end.cost, end.x, end.p))
    };
    let above =
        |v: &Option<(f64, DVector<f64>, DVector<f64>)>| v.as_ref().map_or(true, |e| e.0 >= r);

    let mut roots = Vec::new();
    let mut lo_s = 0.0;
    let mut lo_above = false;
    let mut s = opts.s_min;
    while s <= s_max {
        let v = eval(s, bank);
        let hi_above = above(&v);
        if hi_above != lo_above {
            if let Some(root) = bisect(&mut eval, bank, lo_s, s, lo_above, r, tol, d) {
                roots.push(root);
            }
        }
        lo_s = s;
        lo_above = hi_above;
        s *= 2.0;
    }
    roots
}

#[allow(clippy::too_many_arguments)]
fn bisect(
    eval: &mut impl FnMut(f64, &mut Vec<Probe>) -> Option<(f64, DVector<f64>, DVector<f64>)>,
    bank: &mut Vec<Probe>,
    mut lo: f64,
    mut hi: f64,
    lo_above: bool,
    r: f64,
    tol: f64,
    d: &DVector<f64>,
) -> Option<Root> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return None;
        }
        let v = eval(mid, bank);
        if let Some((c, x, pt)) = &v {
            if (c - r).abs() <= tol * r {
                return Some((d * mid, *c, x.clone(), pt.clone()));
            }
        }
        let mid_above = v.as_ref().map_or(true, |e| e.0 >= r);
        if mid_above == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    None
}

/// True when shooting from the nearest cheaper flows reaches `x` at a cost
/// clearly below `r`.
fn cheaper_exists(
    sys: &AffineSystem,
    x: &DVector<f64>,
    p: &DVector<f64>,
    r: f64,
    bank: &[Probe],
    k: usize,
    steps: usize,
) -> bool {
    let limit = r * (1.0 - 1e-6);
    let dir = p.normalize();
    // Probes on the point's own ray only lead back to it.
    let mut near: Vec<(f64, &Probe)> = bank
        .iter()
        .filter(|b| b.cost < limit && (b.p.normalize() - &dir).norm() > 1e-9)
        .map(|b| ((&b.x - x).norm(), b))
        .collect();
    near.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.cost.total_cmp(&b.1.cost))
            .then_with(|| a.1.p.amax().total_cmp(&b.1.p.amax()))
    });
    let seeds: Vec<DVector<f64>> = near.iter().take(k).map(|(_, b)| b.p.clone()).collect();
    if seeds.is_empty() {
        return false;
    }
    let mut opts = ShootOptions::from_system(sys).seeds_only();
    opts.max_iter = 25;
    opts.steps = Some(steps);
    let sols = shoot_with(sys, x, &seeds, &opts).solutions;
    // Ill-conditioned rays land on nearby covectors of the same extremal.
    sols.iter()
        .any(|s| s.cost < limit && (&s.p0 - p).norm() > SAME_EXTREMAL * (1.0 + p.norm()))
}
