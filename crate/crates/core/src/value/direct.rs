//! Quadratic-penalty minimization of the discrete cost subject to the
//! end-point constraint.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::{endpoint, variational_jacobian, AffineSystem, ControlGrid, DynamicsError};
use crate::linalg;

#[derive(Debug, Clone, Serialize)]
pub struct DirectResult {
    pub control: ControlGrid,
    pub cost: f64,
    /// `|E(u) - x|` at the returned control.
    pub defect: f64,
    /// True once the defect is below `target_tol`.
    pub feasible: bool,
    /// Final penalty weight.
    pub mu: f64,
    pub iterations: usize,
}

const MU_START: f64 = 1.0;
const INNER_MAX: usize = 40;

/// Minimize `C(u) + mu |E(u) - x|^2`, doubling `mu` until the end-point
/// defect drops below `target_tol` or `mu` exceeds `mu_max`.
pub fn direct_minimize(
    sys: &AffineSystem,
    x: &DVector<f64>,
    u0: &ControlGrid,
) -> Result<DirectResult, DynamicsError> {
    let k = u0.intervals();
    let m = u0.channels();
    let horizon = u0.horizon();
    let dt = u0.dt();
    let tol = sys.settings.target_tol;
    let mu_max = sys.settings.mu_max;
    let grid = |v: &DVector<f64>| ControlGrid::from_flat(k, m, horizon, v);

    let mut u = u0.flat();
    let (mut jac, frame) = variational_jacobian(sys, u0)?;
    let mut res = frame.endpoint - x;
    let mut mu = MU_START;
    let mut iterations = 0;
    loop {
        for _ in 0..INNER_MAX {
            let merit = dt * u.norm_squared() + mu * res.norm_squared();
            let grad = &u * (2.0 * dt) + jac.transpose() * &res * (2.0 * mu);
            let Some(dir) = newton_direction(&jac, &grad, dt, mu) else {
                break;
            };
            let slope = grad.dot(&dir);
            if !(slope < 0.0) {
                break;
            }
            let mut alpha = 1.0;
            let mut next = None;
            while alpha > 1e-8 {
                let trial = &u + &dir * alpha;
                if let Ok(e) = endpoint(sys, &grid(&trial)) {
                    let r = e - x;
                    let value = dt * trial.norm_squared() + mu * r.norm_squared();
                    if value <= merit + 1e-4 * alpha * slope {
                        next = Some((trial, value));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, value)) = next else { break };
            let step = (&trial - &u).norm();
            u = trial;
            iterations += 1;
            let (j, f) = variational_jacobian(sys, &grid(&u))?;
            jac = j;
            res = f.endpoint - x;
            if step <= 1e-12 * (1.0 + u.norm()) || merit - value <= 1e-15 * merit {
                break;
            }
        }
        if res.norm() < tol || mu >= mu_max {
            break;
        }
        mu = (mu * 2.0).min(mu_max);
    }
    let control = grid(&u);
    let defect = res.norm();
    Ok(DirectResult {
        cost: control.cost(),
        control,
        defect,
        feasible: defect < tol,
        mu,
        iterations,
    })
}

/// `-H^{-1} g` for `H = 2 dt I + 2 mu J^T J`, through the n × n system
/// `(dt/mu I + J J^T)`.
fn newton_direction(
    jac: &DMatrix<f64>,
    grad: &DVector<f64>,
    dt: f64,
    mu: f64,
) -> Option<DVector<f64>> {
    let n = jac.nrows();
    let small = DMatrix::identity(n, n) * (dt / mu) + jac * jac.transpose();
    let jg = jac * grad;
    let y = small
        .clone()
        .cholesky()
        .map(|c| c.solve(&jg))
        .or_else(|| linalg::pinv_solve(&small, &jg, 1e-14))?;
    let hg = (grad - jac.transpose() * y) / (2.0 * dt);
    Some(-hg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use nalgebra::dvector;

    #[test]
    fn feasible_start_stays() {
        let sys = systems::working();
        let r = direct_minimize(&sys, &dvector![1.0, 0.0], &sys.zero_control()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn converges_to_constant_geodesic() {
        let sys = systems::working();
        let u0 = ControlGrid::constant(64, 1.0, &[0.9]);
        let r = direct_minimize(&sys, &dvector![1.0 + 1.0 / 3.0, 1.0], &u0).unwrap();
        assert!(r.feasible, "defect {}", r.defect);
        assert!((r.cost - 1.0).abs() < 1e-3, "cost {}", r.cost);
        assert!(r.control.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn infeasible_target_reports_failure() {
        let sys = systems::working();
        let r = direct_minimize(&sys, &dvector![0.5, 0.0], &sys.zero_control()).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.mu, sys.settings.mu_max);
    }
}
