//! Jacobian of the end-point map.
//!
//! Forward pass: state and resolvent `M' = A_u M`, `M(0) = I`. Backward
//! pass: `N' = -N A_u` from `N(T) = I`, so that `N(s) = M(T) M(s)^{-1}`
//! without ever inverting `M`. The state at backward half steps is recovered
//! by cubic Hermite interpolation of the stored forward knots. Column
//! `(k, i)` of `dE(u)` is `int_{interval k} N(s) f_i(x_u(s)) ds`, computed by
//! composite Simpson on the substep knots.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::integrate::check_control;
use super::{AffineSystem, ControlGrid, DynamicsError, Trajectory};
use crate::ode::Rk4;

/// Resolvent samples at the control-grid knots `kT/K`, `k = 0..=K`.
#[derive(Debug, Clone, Serialize)]
pub struct VariationalFrame {
    /// `M_u(T)`.
    #[serde(serialize_with = "crate::serde_vec::matrix")]
    pub m_t: DMatrix<f64>,
    #[serde(skip)]
    pub m_samples: Vec<DMatrix<f64>>,
    /// `N_u(s) = M_u(T) M_u(s)^{-1}`; the last entry is exactly the identity.
    #[serde(skip)]
    pub n_samples: Vec<DMatrix<f64>>,
    /// `B_u(s) = (f_1(x_u(s)), .., f_m(x_u(s)))`, n × m.
    #[serde(skip)]
    pub b_samples: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub endpoint: DVector<f64>,
}

/// `dE(u)` as an `n × (K m)` matrix (column `k m + i`) plus the resolvents.
pub fn variational_jacobian(
    sys: &AffineSystem,
    u: &ControlGrid,
) -> Result<(DMatrix<f64>, VariationalFrame), DynamicsError> {
    check_control(sys, u)?;
    let n = sys.n();
    let m = sys.m();
    let nn = n * n;
    let k_int = u.intervals();
    let os = sys.settings.oversample.max(1);
    let total = k_int * os;
    let t_end = sys.horizon();
    let h = t_end / total as f64;
    let mut ev = sys.evaluator();

    // Forward: y = (x, M) with M row-major.
    let mut y = vec![0.0; n + nn];
    y[..n].copy_from_slice(sys.x0().as_slice());
    for i in 0..n {
        y[n + i * n + i] = 1.0;
    }
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(total + 1);
    xs.push(y[..n].to_vec());
    let mut m_samples = vec![DMatrix::identity(n, n)];
    let mut rk = Rk4::new(n + nn);
    let mut a = vec![0.0; nn];
    for interval in 0..k_int {
        let uk = u.row(interval);
        for sub in 0..os {
            rk.step(&mut y, h, |_, s, ds| {
                let (x, mm) = s.split_at(n);
                let (dx, dm) = ds.split_at_mut(n);
                ev.rhs_jac(x, &uk, dx, &mut a)?;
                matmul(&a, mm, dm, n);
                Ok::<(), DynamicsError>(())
            })?;
            let j = interval * os + sub + 1;
            if sys.outside_guard(&y[..n]) {
                let t = t_end * j as f64 / total as f64;
                let times = (0..=j).map(|i| t_end * i as f64 / total as f64).collect();
                let mut states: Vec<DVector<f64>> =
                    xs.iter().map(|x| DVector::from_column_slice(x)).collect();
                states.push(DVector::from_column_slice(&y[..n]));
                return Err(DynamicsError::ExplosionGuard {
                    time: t,
                    trajectory: Box::new(Trajectory {
                        times,
                        states,
                        converged: false,
                    }),
                });
            }
            xs.push(y[..n].to_vec());
        }
        m_samples.push(DMatrix::from_row_slice(n, n, &y[n..]));
    }
    let m_t = DMatrix::from_row_slice(n, n, &y[n..]);

    // Backward: N from identity at T.
    let mut nmat = vec![0.0; nn];
    for i in 0..n {
        nmat[i * n + i] = 1.0;
    }
    let mut n_knots: Vec<Vec<f64>> = vec![Vec::new(); total + 1];
    n_knots[total] = nmat.clone();
    let mut rk_n = Rk4::new(nn);
    let mut xdot_lo = vec![0.0; n];
    let mut xdot_hi = vec![0.0; n];
    let mut xmid = vec![0.0; n];
    let mut a_lo = vec![0.0; nn];
    let mut a_hi = vec![0.0; nn];
    let mut a_mid = vec![0.0; nn];
    for j in (1..=total).rev() {
        let uk = u.row((j - 1) / os);
        let (x_lo, x_hi) = (&xs[j - 1], &xs[j]);
        ev.rhs_jac(x_lo, &uk, &mut xdot_lo, &mut a_lo)?;
        ev.rhs_jac(x_hi, &uk, &mut xdot_hi, &mut a_hi)?;
        for i in 0..n {
            xmid[i] = 0.5 * (x_lo[i] + x_hi[i]) + h / 8.0 * (xdot_lo[i] - xdot_hi[i]);
        }
        let mut scratch = vec![0.0; n];
        ev.rhs_jac(&xmid, &uk, &mut scratch, &mut a_mid)?;
        rk_n.step(&mut nmat, -h, |stage, s, ds| {
            let am = match stage {
                0 => &a_hi,
                3 => &a_lo,
                _ => &a_mid,
            };
            matmul(s, am, ds, n);
            for v in ds.iter_mut() {
                *v = -*v;
            }
            Ok::<(), DynamicsError>(())
        })?;
        n_knots[j - 1] = nmat.clone();
    }

    // Quadrature of N f_i over each interval.
    let mut fvals = vec![0.0; m * n];
    let mut integrand: Vec<Vec<f64>> = Vec::with_capacity(total + 1); // n × m per knot, column-major by field
    for j in 0..=total {
        ev.field_values(&xs[j], &mut fvals)?;
        let nj = &n_knots[j];
        let mut g = vec![0.0; n * m];
        for i in 0..m {
            for r in 0..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += nj[r * n + c] * fvals[i * n + c];
                }
                g[i * n + r] = acc;
            }
        }
        integrand.push(g);
    }
    let weights = quadrature_weights(os, h);
    let mut jac = DMatrix::zeros(n, k_int * m);
    for interval in 0..k_int {
        for (w_idx, w) in weights.iter().enumerate() {
            let g = &integrand[interval * os + w_idx];
            for i in 0..m {
                for r in 0..n {
                    jac[(r, interval * m + i)] += w * g[i * n + r];
                }
            }
        }
    }

    let mut n_samples = Vec::with_capacity(k_int + 1);
    let mut b_samples = Vec::with_capacity(k_int + 1);
    for k in 0..=k_int {
        let j = k * os;
        n_samples.push(DMatrix::from_row_slice(n, n, &n_knots[j]));
        ev.field_values(&xs[j], &mut fvals)?;
        b_samples.push(DMatrix::from_fn(n, m, |r, i| fvals[i * n + r]));
    }
    // Stored exactly, not as the result of arithmetic.
    n_samples[k_int] = DMatrix::identity(n, n);
    let frame = VariationalFrame {
        m_t,
        m_samples,
        n_samples,
        b_samples,
        endpoint: DVector::from_column_slice(&xs[total]),
    };
    Ok((jac, frame))
}

/// Composite Simpson weights over `os` substeps of width `h` (trapezoid
/// when `os` is odd).
fn quadrature_weights(os: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; os + 1];
    if os % 2 == 0 {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = if i == 0 || i == os {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
    } else {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = if i == 0 || i == os { h / 2.0 } else { h };
        }
    }
    w
}

/// `out = a b` for row-major n × n matrices.
fn matmul(a: &[f64], b: &[f64], out: &mut [f64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[r * n + k] * b[k * n + c];
            }
            out[r * n + c] = acc;
        }
    }
}
