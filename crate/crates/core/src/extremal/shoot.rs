//! Numerical inversion of `exp` by damped Gauss-Newton from many seeds.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::flow::{flow_end, steps_for, FlowEnd};
use crate::dynamics::AffineSystem;
use crate::linalg;

/// One converged preimage of the target under `exp`.
#[derive(Debug, Clone, Serialize)]
pub struct ShootSolution {
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub p0: DVector<f64>,
    pub cost: f64,
    pub defect: f64,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub endpoint: DVector<f64>,
    /// Covector at the final time.
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub p_t: DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootReport {
    /// Distinct solutions sorted by cost, then covector lexicographically.
    pub solutions: Vec<ShootSolution>,
    /// Smallest defect reached by any seed, converged or not.
    pub best_defect: f64,
}

impl ShootReport {
    pub fn cheapest(&self) -> Option<&ShootSolution> {
        self.solutions.first()
    }
}

#[derive(Debug, Clone)]
pub struct ShootOptions {
    /// Append the deterministic low-discrepancy sweep to the caller's seeds.
    pub sweep: bool,
    pub sweep_count: usize,
    pub sweep_radius: f64,
    /// Starting index into the Halton sequence.
    pub sweep_offset: usize,
    pub max_iter: usize,
    /// Absolute defect tolerance is `tol * (1 + |target|)`.
    pub tol: f64,
    pub dedup_tol: f64,
    /// Flow steps; `None` uses the system's flow step.
    pub steps: Option<usize>,
}

impl ShootOptions {
    pub fn from_system(sys: &AffineSystem) -> ShootOptions {
        let s = &sys.settings;
        ShootOptions {
            sweep: true,
            sweep_count: s.seed_count,
            sweep_radius: s.seed_radius,
            sweep_offset: 0,
            max_iter: s.shoot_max_iter,
            tol: s.shoot_tol,
            dedup_tol: s.dedup_tol,
            steps: None,
        }
    }

    pub fn seeds_only(mut self) -> ShootOptions {
        self.sweep = false;
        self
    }
}

/// All distinct normal extremals reaching `target`, from the caller's seeds
/// plus the default sweep.
pub fn shoot(sys: &AffineSystem, target: &DVector<f64>, seeds: &[DVector<f64>]) -> ShootReport {
    shoot_with(sys, target, seeds, &ShootOptions::from_system(sys))
}

pub fn shoot_with(
    sys: &AffineSystem,
    target: &DVector<f64>,
    seeds: &[DVector<f64>],
    opts: &ShootOptions,
) -> ShootReport {
    let n = sys.n();
    let mut all: Vec<DVector<f64>> = seeds.iter().filter(|s| s.len() == n).cloned().collect();
    if opts.sweep {
        all.extend(seed_sweep(
            n,
            opts.sweep_count,
            opts.sweep_radius,
            opts.sweep_offset,
        ));
    }
    let steps = opts.steps.unwrap_or_else(|| steps_for(sys));
    let tol = opts.tol * (1.0 + target.norm());
    let mut best_defect = f64::INFINITY;
    let mut found = Vec::new();
    for seed in &all {
        if !target.iter().all(|v| v.is_finite()) {
            break;
        }
        let (sol, defect) = two_stage(sys, target, seed, steps, opts.max_iter, tol);
        best_defect = best_defect.min(defect);
        if let Some(s) = sol {
            found.push(s);
        }
    }
    ShootReport {
        solutions: dedup(found, opts.dedup_tol),
        best_defect,
    }
}

/// Sort by (cost, covector) and merge covectors closer than `tol (1 + |p|)`.
fn dedup(mut found: Vec<ShootSolution>, tol: f64) -> Vec<ShootSolution> {
    found.sort_by(|a, b| {
        a.cost.total_cmp(&b.cost).then_with(|| {
            a.p0.iter()
                .zip(b.p0.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut out: Vec<ShootSolution> = Vec::new();
    for s in found {
        let dup = out
            .iter()
            .any(|o| (&o.p0 - &s.p0).norm() < tol * (1.0 + s.p0.norm()));
        if !dup {
            out.push(s);
        }
    }
    out
}

fn residual(
    sys: &AffineSystem,
    p: &DVector<f64>,
    target: &DVector<f64>,
    steps: usize,
) -> Option<(DVector<f64>, FlowEnd)> {
    let end = flow_end(sys, p, steps).ok()?;
    let f = &end.x - target;
    if f.iter().all(|v| v.is_finite()) {
        Some((f, end))
    } else {
        None
    }
}

/// Central-difference Jacobian of `exp`. The base step is
/// `1e-6 (1 + |p|)`; when a probe leaves the guard ball the step for that
/// coordinate falls back to `1e-6 |p_j|` and then shrinks by 1e-3.
fn fd_jacobian(sys: &AffineSystem, p: &DVector<f64>, steps: usize) -> Option<DMatrix<f64>> {
    let n = p.len();
    let base = 1e-6 * (1.0 + p.norm());
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut h = base;
        let mut fallback_used = false;
        let mut col = None;
        for _ in 0..12 {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[j] += h;
            pm[j] -= h;
            match (flow_end(sys, &pp, steps), flow_end(sys, &pm, steps)) {
                (Ok(a), Ok(b)) => {
                    col = Some((a.x - b.x) / (2.0 * h));
                    break;
                }
                _ => {
                    if !fallback_used && p[j] != 0.0 && 1e-6 * p[j].abs() < h {
                        h = 1e-6 * p[j].abs();
                        fallback_used = true;
                    } else {
                        h *= 1e-3;
                    }
                }
            }
        }
        jac.set_column(j, &col?);
    }
    Some(jac)
}

/// Iterate on a flow four times coarser until close, then polish on the
/// requested step count.
fn two_stage(
    sys: &AffineSystem,
    target: &DVector<f64>,
    seed: &DVector<f64>,
    steps: usize,
    max_iter: usize,
    tol: f64,
) -> (Option<ShootSolution>, f64) {
    let coarse = steps / 4;
    if coarse < 64 {
        return gauss_newton(sys, target, seed, steps, max_iter, tol);
    }
    let loose = tol.max(1e-6 * (1.0 + target.norm()));
    match gauss_newton(sys, target, seed, coarse, max_iter, loose) {
        (Some(s), _) => gauss_newton(sys, target, &s.p0, steps, max_iter, tol),
        (None, d) => (None, d),
    }
}

fn gauss_newton(
    sys: &AffineSystem,
    target: &DVector<f64>,
    seed: &DVector<f64>,
    steps: usize,
    max_iter: usize,
    tol: f64,
) -> (Option<ShootSolution>, f64) {
    let Some((mut f, mut end)) = residual(sys, seed, target, steps) else {
        return (None, f64::INFINITY);
    };
    let mut p = seed.clone();
    let mut norm = f.norm();
    let mut stalled = 0;
    for _ in 0..max_iter {
        if norm <= tol {
            break;
        }
        let Some(jac) = fd_jacobian(sys, &p, steps) else {
            break;
        };
        let Some(delta) = linalg::pinv_solve(&jac, &(-&f), 1e-14) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-3 {
            let trial = &p + &delta * alpha;
            if let Some((ft, et)) = residual(sys, &trial, target, steps) {
                let nt = ft.norm();
                if nt < (1.0 - 1e-4 * alpha) * norm {
                    stalled = if nt > 0.99 * norm { stalled + 1 } else { 0 };
                    p = trial;
                    f = ft;
                    end = et;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted || stalled >= 4 {
            break;
        }
    }
    if norm <= tol {
        (
            Some(ShootSolution {
                p0: p,
                cost: end.cost,
                defect: norm,
                endpoint: end.x,
                p_t: end.p,
            }),
            norm,
        )
    } else {
        (None, norm)
    }
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: usize, b: usize) -> f64 {
    let mut inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    inv = r;
    inv
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Deterministic Halton points inside the ball of radius `radius`, the
/// origin first (when `offset == 0`).
pub fn seed_sweep(n: usize, count: usize, radius: f64, offset: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    if offset == 0 {
        out.push(DVector::zeros(n));
    }
    let mut i = offset + 1;
    while out.len() < count {
        let v = DVector::from_fn(n, |d, _| {
            2.0 * radical_inverse(i, PRIMES[d % PRIMES.len()]) - 1.0
        });
        i += 1;
        if v.norm() <= 1.0 {
            out.push(v * radius);
        }
    }
    out
}
