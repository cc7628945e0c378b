//! The value function, its level sets, and the diagnostics of abnormal
//! minimizers.

mod direct;
mod level;
mod proper;
mod tangency;

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::{AffineSystem, ControlGrid};
use crate::extremal::{phi, shoot};

pub use direct::{direct_minimize, DirectResult};
pub use level::{
    level_set_sample, level_set_sample_with, CloudPoint, LevelOptions, LevelSetCloud, PointFlag,
};
pub use proper::{properness_scan, PropernessRow, PropernessScan};
pub use tangency::{
    loglog_slope, tangency_fit, tangency_fit_points, TangencyReport, WindowStat, TANGENCY_WINDOWS,
};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ValueError {
    #[error("level must be positive and finite, got {0}")]
    Level(f64),
    #[error("target has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{0} must be finite")]
    NotFinite(&'static str),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
}

/// `S(x)`, or the marker for points no control reaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Value {
    Finite { s: f64 },
    Unreachable,
}

impl Value {
    pub fn finite(self) -> Option<f64> {
        match self {
            Value::Finite { s } => Some(s),
            Value::Unreachable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shooting,
    Direct,
    Both,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueResult {
    pub value: Value,
    pub method: Option<Method>,
    pub witness: Option<ControlGrid>,
    /// Initial covector of the cheapest normal extremal, when one was found.
    #[serde(serialize_with = "crate::serde_vec::opt_vector")]
    pub witness_p0: Option<DVector<f64>>,
    pub shooting_cost: Option<f64>,
    pub direct_cost: Option<f64>,
    /// Smallest end-point defect reached by either method.
    pub best_defect: f64,
    pub shooting_solutions: usize,
}

/// Relative slack within which the direct control stands in as witness for
/// a cheaper shooting value.
const WITNESS_SLACK: f64 = 1e-3;

pub fn value_at(sys: &AffineSystem, x: &DVector<f64>) -> Result<ValueResult, ValueError> {
    value_at_with(sys, x, &[])
}

/// [`value_at`] with extra shooting seeds.
pub fn value_at_with(
    sys: &AffineSystem,
    x: &DVector<f64>,
    seeds: &[DVector<f64>],
) -> Result<ValueResult, ValueError> {
    if x.len() != sys.n() {
        return Err(ValueError::Dimension {
            expected: sys.n(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ValueError::NotFinite("target"));
    }
    let report = shoot(sys, x, seeds);
    let best = report.cheapest().cloned();
    let mut best_defect = report.best_defect;

    let mut starts = vec![sys.zero_control()];
    if let Some(b) = &best {
        if let Ok(u) = phi(sys, &b.p0) {
            starts.push(u);
        }
    }
    let mut direct: Option<DirectResult> = None;
    for u0 in &starts {
        let Ok(r) = direct_minimize(sys, x, u0) else {
            continue;
        };
        best_defect = best_defect.min(r.defect);
        if r.feasible && direct.as_ref().map_or(true, |d| r.cost < d.cost) {
            direct = Some(r);
        }
    }

    let shooting_cost = best.as_ref().map(|b| b.cost);
    let direct_cost = direct.as_ref().map(|d| d.cost);
    let (value, method) = match (shooting_cost, direct_cost) {
        (Some(a), Some(b)) => (Value::Finite { s: a.min(b) }, Some(Method::Both)),
        (Some(a), None) => (Value::Finite { s: a }, Some(Method::Shooting)),
        (None, Some(b)) => (Value::Finite { s: b }, Some(Method::Direct)),
        (None, None) => (Value::Unreachable, None),
    };
    let witness = match (&direct, &best, value) {
        (Some(d), _, Value::Finite { s }) if d.cost <= s * (1.0 + WITNESS_SLACK) + 1e-12 => {
            Some(d.control.clone())
        }
        (_, Some(b), _) => phi(sys, &b.p0).ok(),
        _ => None,
    };
    Ok(ValueResult {
        value,
        method,
        witness,
        witness_p0: best.map(|b| b.p0),
        shooting_cost,
        direct_cost,
        best_defect,
        shooting_solutions: report.solutions.len(),
    })
}
