//! Lagrange multipliers `(p(T), p0)` with `p(T) dE(u) + p0 dC(u) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{variational_jacobian, AffineSystem, ControlGrid, DynamicsError};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierClass {
    RegularConsistent,
    Abnormal,
    /// `p0 != 0` with `p(T) = 0`; only possible where `dC(u) = 0`.
    Degenerate,
}

impl MultiplierClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MultiplierClass::RegularConsistent => "regular-consistent",
            MultiplierClass::Abnormal => "abnormal",
            MultiplierClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierSolution {
    #[serde(rename = "pT")]
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub p_t: DVector<f64>,
    pub p0: f64,
    pub residual: f64,
    pub classification: MultiplierClass,
    pub corank: usize,
    /// False for the least-squares fallback when no exact null direction exists.
    pub exact: bool,
}

impl MultiplierSolution {
    /// `(p(T), p0)` as one unit vector.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.p_t.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.p_t[i] } else { self.p0 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierReport {
    pub solutions: Vec<MultiplierSolution>,
    pub corank: usize,
    pub rank: usize,
    /// Singular values of `dE(u)`, decreasing.
    pub singular_values: Vec<f64>,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub endpoint: DVector<f64>,
}

impl MultiplierReport {
    pub fn abnormal(&self) -> impl Iterator<Item = &MultiplierSolution> {
        self.solutions
            .iter()
            .filter(|s| s.exact && s.classification == MultiplierClass::Abnormal)
    }

    pub fn is_abnormal(&self) -> bool {
        self.abnormal().next().is_some()
    }
}

/// Unit norm, first coordinate above 1e-12 in magnitude made positive.
pub fn projectivize(v: &DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v.clone();
    }
    let mut w = v / norm;
    if let Some(first) = w.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            w = -w;
        }
    }
    w.map(|c| c + 0.0)
}

/// Multipliers of `u` from the SVD of the stacked matrix `[dE(u); dC(u)]`.
pub fn lagrange_multipliers(
    sys: &AffineSystem,
    u: &ControlGrid,
) -> Result<MultiplierReport, DynamicsError> {
    let (de, frame) = variational_jacobian(sys, u)?;
    Ok(multipliers_from(
        sys,
        &de,
        &u.cost_gradient(),
        frame.endpoint,
    ))
}

pub(crate) fn multipliers_from(
    sys: &AffineSystem,
    de: &DMatrix<f64>,
    dc: &DVector<f64>,
    endpoint: DVector<f64>,
) -> MultiplierReport {
    let n = de.nrows();
    let cols = de.ncols();
    let s = &sys.settings;
    let rank = linalg::rank(de, s.rank_tol);
    let corank = n - rank;
    let mut g = DMatrix::zeros(n + 1, cols);
    g.view_mut((0, 0), (n, cols)).copy_from(de);
    for j in 0..cols {
        g[(n, j)] = dc[j];
    }

    let residual = |w: &DVector<f64>| -> f64 { (g.transpose() * w).norm() };
    let lift = |q: &DVector<f64>| DVector::from_fn(n + 1, |i, _| if i < n { q[i] } else { 0.0 });

    let mut basis: Vec<DVector<f64>> = linalg::left_null_space(de, s.rank_tol)
        .iter()
        .map(lift)
        .collect();
    basis.truncate(corank);
    let abnormal_dim = basis.len();

    // Remaining exact null directions of G, orthogonal to the abnormal ones.
    let pairs = linalg::left_singular_pairs(&g);
    let smax = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let null_dim = pairs
        .iter()
        .filter(|(sv, _)| smax == 0.0 || *sv <= s.rank_tol * smax)
        .count();
    for (sv, v) in &pairs {
        if basis.len() >= null_dim.max(abnormal_dim) {
            break;
        }
        if !(smax == 0.0 || *sv <= s.rank_tol * smax) {
            break;
        }
        let mut w = v.clone();
        for b in &basis {
            w -= b * b.dot(&w);
        }
        let wn = w.norm();
        if wn > 1e-6 {
            basis.push(w / wn);
        }
    }
    let exact = !basis.is_empty();
    if !exact {
        basis.push(pairs[0].1.clone());
    }

    let solutions = basis
        .iter()
        .map(|w| {
            let w = projectivize(w);
            let p_t = w.rows(0, n).into_owned();
            let p0 = w[n];
            let classification = if p0.abs() < s.abn_tol {
                MultiplierClass::Abnormal
            } else if p_t.norm() < s.abn_tol {
                MultiplierClass::Degenerate
            } else {
                MultiplierClass::RegularConsistent
            };
            MultiplierSolution {
                residual: residual(&w),
                p_t,
                p0,
                classification,
                corank,
                exact,
            }
        })
        .collect();
    MultiplierReport {
        solutions,
        corank,
        rank,
        singular_values: linalg::singular_values(de),
        endpoint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use nalgebra::dvector;

    #[test]
    fn working_example_zero_control() {
        let sys = systems::working();
        let rep = lagrange_multipliers(&sys, &sys.zero_control()).unwrap();
        assert_eq!(rep.corank, 1);
        assert_eq!(rep.rank, 1);
        let ab: Vec<_> = rep.abnormal().collect();
        assert_eq!(ab.len(), 1);
        assert!((&ab[0].p_t - dvector![1.0, 0.0]).norm() < 1e-12);
        assert!(
            rep.solutions
                .iter()
                .any(|s| s.classification == MultiplierClass::Degenerate
                    && (s.p0 - 1.0).abs() < 1e-12)
        );
        assert!(rep.singular_values[1] / rep.singular_values[0] < 1e-8);
    }

    #[test]
    fn single_integrator_has_no_abnormal() {
        let sys = systems::single_integrator(1);
        let u = ControlGrid::from_fn(16, 1, 1.0, |k, _| (k as f64 * 0.7).sin());
        let rep = lagrange_multipliers(&sys, &u).unwrap();
        assert_eq!(rep.corank, 0);
        assert!(!rep.is_abnormal());
    }

    #[test]
    fn projectivize_sign_rule() {
        let v = projectivize(&dvector![0.0, -3.0, 4.0]);
        assert!((v - dvector![0.0, 0.6, -0.8]).norm() < 1e-15);
    }
}
