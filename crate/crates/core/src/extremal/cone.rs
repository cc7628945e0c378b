//! Bracket span `span{ad^k f1 . f2}` along the reference trajectory of
//! `u = (1, 0)` and the three genericity conditions on it.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{endpoint, AffineSystem, ControlGrid, DynamicsError};
use crate::field::{LieBracket, VectorField};
use crate::linalg;

#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub t: f64,
    /// Reference point on the trajectory at time `t`.
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub point: DVector<f64>,
    /// `ad^k f1 . f2` at `point` for `k = 0..=kmax`.
    #[serde(serialize_with = "crate::serde_vec::vectors")]
    pub brackets: Vec<DVector<f64>>,
    /// Rank of the brackets up to `kmax`.
    pub span_dim: usize,
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
}

fn contains(cols: &[DVector<f64>], v: &DVector<f64>, tol: f64) -> bool {
    let n = v.len();
    let base = span_rank(cols, n, tol);
    let mut with = cols.to_vec();
    with.push(v.clone());
    span_rank(&with, n, tol) == base
}

fn span_rank(cols: &[DVector<f64>], n: usize, tol: f64) -> usize {
    if cols.is_empty() {
        return 0;
    }
    linalg::rank(&DMatrix::from_columns(cols), tol).min(n)
}

fn reference_point(sys: &AffineSystem, t: f64) -> Result<DVector<f64>, DynamicsError> {
    if t == 0.0 {
        return Ok(sys.x0().clone());
    }
    let reference = sys
        .clone()
        .with_horizon(t)
        .map_err(|e| DynamicsError::ControlMismatch(e.to_string()))?;
    let mut unit = vec![0.0; sys.m()];
    unit[0] = 1.0;
    let k = ((t / sys.settings.flow_step) / sys.settings.oversample.max(1) as f64)
        .ceil()
        .max(1.0) as usize;
    endpoint(&reference, &ControlGrid::constant(k, t, &unit))
}

/// Requires `m = 2`.
pub fn pontryagin_cone(
    sys: &AffineSystem,
    t: f64,
    kmax: usize,
) -> Result<ConeReport, DynamicsError> {
    if sys.m() != 2 {
        return Err(DynamicsError::ControlMismatch(format!(
            "cone test needs exactly 2 controlled fields, system has {}",
            sys.m()
        )));
    }
    let n = sys.n();
    let tol = sys.settings.rank_tol;
    let h = sys.settings.h_bracket;
    let point = reference_point(sys, t)?;
    let f1: Arc<dyn VectorField> = Arc::new(sys.fields()[0].clone());
    let f2: Arc<dyn VectorField> = Arc::new(sys.fields()[1].clone());

    let depth = kmax.max(n.saturating_sub(2));
    let mut brackets = Vec::with_capacity(depth + 1);
    let mut cur = f2.clone();
    for k in 0..=depth {
        if k > 0 {
            cur = Arc::new(LieBracket::new(f1.clone(), cur).with_step(h));
        }
        brackets.push(cur.value(&point)?);
    }
    let span_dim = span_rank(&brackets[..=kmax], n, tol);
    let h1 = span_rank(&brackets[..=n.saturating_sub(2)], n, tol) == n.saturating_sub(1);
    let inner: Arc<dyn VectorField> =
        Arc::new(LieBracket::new(f2.clone(), f1.clone()).with_step(h));
    let ad2 = LieBracket::new(f2.clone(), inner)
        .with_step(h)
        .value(&point)?;
    let h2 = !contains(&brackets, &ad2, tol);
    let f1_val = f1.value(&point)?;
    let h3 = if n >= 3 {
        !contains(&brackets[..=n - 3], &f1_val, tol)
    } else {
        f1_val.norm() > 0.0
    };
    brackets.truncate(kmax + 1);
    Ok(ConeReport {
        t,
        point,
        brackets,
        span_dim,
        h1,
        h2,
        h3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ExprField;
    use crate::systems;
    use nalgebra::dvector;

    #[test]
    fn heisenberg_has_codimension_one() {
        let rep = pontryagin_cone(&systems::heisenberg(), 0.5, 2).unwrap();
        assert!((&rep.point - dvector![0.5, 0.0, 0.0]).norm() < 1e-12);
        assert_eq!(rep.span_dim, 2);
        assert!(rep.h1);
    }

    #[test]
    fn martinet_flat_degenerates_on_axis() {
        let rep = pontryagin_cone(&systems::martinet_flat(), 0.5, 2).unwrap();
        assert_eq!(rep.span_dim, 1);
        assert!(!rep.h1);
        assert!(rep.h2);
    }

    #[test]
    fn equal_fields_span_a_line() {
        let f = ExprField::parse(&["1", "x", "0"], 3).unwrap();
        let sys = AffineSystem::new("equal", ExprField::zero(3), vec![f.clone(), f], 1.0).unwrap();
        for k in 0..4 {
            assert_eq!(pontryagin_cone(&sys, 0.3, k).unwrap().span_dim, 1);
        }
    }

    #[test]
    fn wrong_control_count() {
        assert!(pontryagin_cone(&systems::working(), 0.5, 2).is_err());
    }
}
