//! Covector norms of `exp`-preimages along a curve of targets.

use nalgebra::DVector;
use serde::Serialize;

use super::ValueError;
use crate::csvio::{self, CsvError};
use crate::dynamics::AffineSystem;
use crate::extremal::{projectivize, shoot_with, ShootOptions, ShootSolution, NORMAL_P0};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropernessRow {
    pub delta: f64,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub target: DVector<f64>,
    /// Smallest `|p(0)|` among the solutions; `None` when shooting failed.
    pub pnorm: Option<f64>,
    /// Cost coordinate of the projectivized multiplier of that solution.
    pub p0proj: Option<f64>,
    pub cost: Option<f64>,
    pub solutions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropernessScan {
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub base: DVector<f64>,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub direction: DVector<f64>,
    /// Sorted by decreasing `delta`.
    pub rows: Vec<PropernessRow>,
}

impl PropernessScan {
    pub fn row(&self, delta: f64) -> Option<&PropernessRow> {
        self.rows.iter().find(|r| r.delta == delta)
    }

    /// CSV `delta,target1..targetn,pnorm,p0proj`; failures are written as NaN.
    pub fn to_csv(&self) -> String {
        let n = self.base.len();
        let mut header = vec!["delta".to_string()];
        header.extend(csvio::numbered_header("target", n));
        header.extend(["pnorm", "p0proj"].map(String::from));
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.delta];
                v.extend(r.target.iter());
                v.push(r.pnorm.unwrap_or(f64::NAN));
                v.push(r.p0proj.unwrap_or(f64::NAN));
                v
            })
            .collect();
        csvio::write_table(&header, &rows)
    }

    /// `(delta, target, pnorm, p0proj)` rows back from [`PropernessScan::to_csv`].
    pub fn rows_from_csv(text: &str) -> Result<Vec<(f64, DVector<f64>, f64, f64)>, CsvError> {
        let (header, rows) = csvio::read_table(text)?;
        if header.first().map(String::as_str) != Some("delta") || header.len() < 4 {
            return Err(CsvError::Header {
                expected: "delta,target..,pnorm,p0proj".into(),
                got: header.join(","),
            });
        }
        let n = header.len() - 3;
        Ok(rows
            .into_iter()
            .map(|r| {
                (
                    r[0],
                    DVector::from_column_slice(&r[1..=n]),
                    r[n + 1],
                    r[n + 2],
                )
            })
            .collect())
    }
}

/// Largest ratio between consecutive continuation targets.
const CONTINUATION_RATIO: f64 = 1.25;

/// Shoot to `base + delta * direction` for every `delta`, continuing each
/// solution branch from large to small `delta` through intermediate targets.
pub fn properness_scan(
    sys: &AffineSystem,
    base: &DVector<f64>,
    direction: &DVector<f64>,
    deltas: &[f64],
) -> Result<PropernessScan, ValueError> {
    let n = sys.n();
    for v in [base, direction] {
        if v.len() != n {
            return Err(ValueError::Dimension {
                expected: n,
                got: v.len(),
            });
        }
    }
    if base
        .iter()
        .chain(direction.iter())
        .chain(deltas)
        .any(|v| !v.is_finite())
    {
        return Err(ValueError::NotFinite("scan parameters"));
    }
    let mut requested: Vec<f64> = deltas.to_vec();
    requested.sort_by(|a, b| b.total_cmp(a));
    requested.dedup();

    let full = ShootOptions::from_system(sys);
    let quick = full.clone().seeds_only();
    // Per branch: the last two (delta, p0) pairs.
    let mut branches: Vec<Vec<(f64, DVector<f64>)>> = Vec::new();
    let mut prev_delta: Option<f64> = None;
    let mut rows = Vec::with_capacity(requested.len());
    for &delta in &requested {
        if let Some(start) = prev_delta {
            for d in intermediate(start, delta) {
                let seeds = predict(&branches, d);
                let sols = shoot_with(sys, &(base + direction * d), &seeds, &quick).solutions;
                track(&mut branches, d, &sols);
            }
        }
        let target = base + direction * delta;
        let seeds = predict(&branches, delta);
        let sols = shoot_with(sys, &target, &seeds, &full).solutions;
        track(&mut branches, delta, &sols);
        let best = sols
            .iter()
            .min_by(|a, b| a.p0.norm().total_cmp(&b.p0.norm()));
        rows.push(PropernessRow {
            delta,
            pnorm: best.map(|b| b.p0.norm()),
            p0proj: best.map(|b| {
                let stacked =
                    DVector::from_fn(n + 1, |i, _| if i < n { b.p_t[i] } else { NORMAL_P0 });
                projectivize(&stacked)[n]
            }),
            cost: best.map(|b| b.cost),
            solutions: sols.len(),
            target,
        });
        prev_delta = Some(delta);
    }
    Ok(PropernessScan {
        base: base.clone(),
        direction: direction.clone(),
        rows,
    })
}

/// Geometric steps strictly between `from` and `to`, for same-sign
/// nonzero endpoints.
fn intermediate(from: f64, to: f64) -> Vec<f64> {
    if from == 0.0 || to == 0.0 || from.signum() != to.signum() {
        return Vec::new();
    }
    let ratio = (from / to).abs();
    let k = (ratio.ln() / CONTINUATION_RATIO.ln()).ceil() as usize;
    (1..k)
        .map(|i| from * (to / from).powf(i as f64 / k as f64))
        .collect()
}

/// Seeds for `delta`: each branch's last point, plus linear and log-log
/// extrapolations when two points are known.
fn predict(branches: &[Vec<(f64, DVector<f64>)>], delta: f64) -> Vec<DVector<f64>> {
    let mut seeds = Vec::new();
    for b in branches {
        let Some((d2, p2)) = b.last() else { continue };
        seeds.push(p2.clone());
        if b.len() < 2 {
            continue;
        }
        let (d1, p1) = &b[b.len() - 2];
        let (l1, l2, l3) = (d1.abs().ln(), d2.abs().ln(), delta.abs().ln());
        if l2 == l1 {
            continue;
        }
        let w = (l3 - l2) / (l2 - l1);
        seeds.push(p2 + (p2 - p1) * w);
        seeds.push(DVector::from_fn(p2.len(), |i, _| {
            let (a, c) = (p1[i], p2[i]);
            if a != 0.0 && c != 0.0 && a.signum() == c.signum() {
                c * (c / a).powf(w)
            } else {
                c + (c - a) * w
            }
        }));
    }
    seeds.retain(|s| s.iter().all(|v| v.is_finite()));
    seeds
}

/// Attach each solution to the branch whose prediction it continues, or
/// start a new branch.
fn track(branches: &mut Vec<Vec<(f64, DVector<f64>)>>, delta: f64, sols: &[ShootSolution]) {
    let mut next: Vec<Vec<(f64, DVector<f64>)>> = Vec::new();
    for s in sols {
        let nearest = branches
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                b.last()
                    .map(|(_, p)| (i, (p - &s.p0).norm() / (1.0 + p.norm())))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let mut branch = match nearest {
            Some((i, _)) => branches[i].clone(),
            None => Vec::new(),
        };
        branch.push((delta, s.p0.clone()));
        if branch.len() > 2 {
            branch.remove(0);
        }
        next.push(branch);
    }
    if !next.is_empty() {
        *branches = next;
    }
}
