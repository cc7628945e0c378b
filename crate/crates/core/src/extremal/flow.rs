//! Normal extremals: the Hamiltonian flow with `p0 = -1/2` and feedback
//! `u_i = <p, f_i(x)>`, the control mapping `p(0) -> u` and `exp = E . Phi`.

use nalgebra::DVector;
use serde::Serialize;

use crate::csvio;
use crate::dynamics::{AffineSystem, ControlGrid, DynamicsError, Evaluator, Trajectory};
use crate::expr::EvalError;
use crate::ode::Rk4;

/// Normalization of the cost multiplier on normal extremals.
pub const NORMAL_P0: f64 = -0.5;

/// Sampled solution of the normal Hamiltonian system.
#[derive(Debug, Clone, Serialize)]
pub struct ExtremalArc {
    pub times: Vec<f64>,
    #[serde(serialize_with = "crate::serde_vec::vectors")]
    pub states: Vec<DVector<f64>>,
    #[serde(serialize_with = "crate::serde_vec::vectors")]
    pub covectors: Vec<DVector<f64>>,
    /// Induced control at each knot.
    #[serde(serialize_with = "crate::serde_vec::vectors")]
    pub controls: Vec<DVector<f64>>,
    pub cost: f64,
    pub p0norm: f64,
}

impl ExtremalArc {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty arc")
    }

    pub fn final_covector(&self) -> &DVector<f64> {
        self.covectors.last().expect("nonempty arc")
    }

    /// `H = <p, f0> + sum u_i <p, f_i> - 1/2 sum u_i^2` at each knot.
    pub fn hamiltonian(&self, sys: &AffineSystem) -> Result<Vec<f64>, EvalError> {
        use crate::field::VectorField;
        self.states
            .iter()
            .zip(&self.covectors)
            .zip(&self.controls)
            .map(|((x, p), u)| {
                let drift = p.dot(&sys.drift().value(x)?);
                let mut h = drift;
                for (f, ui) in sys.fields().iter().zip(u.iter()) {
                    h += ui * p.dot(&f.value(x)?);
                }
                Ok(h + NORMAL_P0 * u.norm_squared())
            })
            .collect()
    }

    /// Largest `|u_i - <p, f_i(x)>|` over all knots.
    pub fn control_law_residual(&self, sys: &AffineSystem) -> Result<f64, EvalError> {
        use crate::field::VectorField;
        let mut worst: f64 = 0.0;
        for ((x, p), u) in self.states.iter().zip(&self.covectors).zip(&self.controls) {
            for (f, ui) in sys.fields().iter().zip(u.iter()) {
                worst = worst.max((ui - p.dot(&f.value(x)?)).abs());
            }
        }
        Ok(worst)
    }

    /// CSV `t,x1..xn,p1..pn,u1..um`.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.controls[0].len();
        let mut header = vec!["t".to_string()];
        header.extend(csvio::numbered_header("x", n));
        header.extend(csvio::numbered_header("p", n));
        header.extend(csvio::numbered_header("u", m));
        let rows: Vec<Vec<f64>> = (0..self.times.len())
            .map(|j| {
                let mut r = vec![self.times[j]];
                r.extend(self.states[j].iter());
                r.extend(self.covectors[j].iter());
                r.extend(self.controls[j].iter());
                r
            })
            .collect();
        csvio::write_table(&header, &rows)
    }
}

/// Right-hand side of the normal Hamiltonian system on `(x, p, c)` where
/// `c` accumulates the cost.
pub(crate) struct HamiltonianRhs<'a> {
    ev: Evaluator<'a>,
    vals: Vec<f64>,
    jacs: Vec<f64>,
    u: Vec<f64>,
}

impl<'a> HamiltonianRhs<'a> {
    pub(crate) fn new(sys: &'a AffineSystem) -> HamiltonianRhs<'a> {
        let n = sys.n();
        let m = sys.m();
        HamiltonianRhs {
            ev: sys.evaluator(),
            vals: vec![0.0; (m + 1) * n],
            jacs: vec![0.0; (m + 1) * n * n],
            u: vec![0.0; m],
        }
    }

    /// Induced control at `(x, p)`, written to `self.u`.
    fn control(&mut self, x: &[f64], p: &[f64]) -> Result<(), EvalError> {
        let n = p.len();
        self.ev.all_jets(x, &mut self.vals, &mut self.jacs)?;
        for i in 0..self.u.len() {
            let f = &self.vals[(i + 1) * n..(i + 2) * n];
            self.u[i] = p.iter().zip(f).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    pub(crate) fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<(), EvalError> {
        let n = (y.len() - 1) / 2;
        let (x, rest) = y.split_at(n);
        let p = &rest[..n];
        self.control(x, p)?;
        let nn = n * n;
        let m = self.u.len();
        // x' = f0 + sum u_i f_i
        for r in 0..n {
            let mut acc = self.vals[r];
            for i in 0..m {
                acc += self.u[i] * self.vals[(i + 1) * n + r];
            }
            dy[r] = acc;
        }
        // p'_j = -sum_k p_k (df0 + sum u_i df_i)_{kj}
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let mut a = self.jacs[k * n + j];
                for i in 0..m {
                    a += self.u[i] * self.jacs[(i + 1) * nn + k * n + j];
                }
                acc += p[k] * a;
            }
            dy[n + j] = -acc;
        }
        dy[2 * n] = self.u.iter().map(|v| v * v).sum();
        Ok(())
    }
}

pub(crate) fn steps_for(sys: &AffineSystem) -> usize {
    ((sys.horizon() / sys.settings.flow_step).round() as usize).max(1)
}

/// Endpoint data of a normal extremal without storing the arc.
#[derive(Debug, Clone)]
pub(crate) struct FlowEnd {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
    pub cost: f64,
}

pub(crate) fn flow_end(
    sys: &AffineSystem,
    p0: &DVector<f64>,
    steps: usize,
) -> Result<FlowEnd, DynamicsError> {
    let mut out = None;
    run_flow(sys, p0, steps, |_, _| {}, &mut out)?;
    Ok(out.expect("flow finished"))
}

/// Integrate and call `visit(j, y)` at every knot (`j = 0..=steps`).
fn run_flow(
    sys: &AffineSystem,
    p0: &DVector<f64>,
    steps: usize,
    mut visit: impl FnMut(usize, &[f64]),
    out: &mut Option<FlowEnd>,
) -> Result<(), DynamicsError> {
    let n = sys.n();
    if p0.len() != n {
        return Err(DynamicsError::Eval(EvalError::Dimension {
            expected: n,
            got: p0.len(),
        }));
    }
    let t_end = sys.horizon();
    let h = t_end / steps as f64;
    let mut y = vec![0.0; 2 * n + 1];
    y[..n].copy_from_slice(sys.x0().as_slice());
    y[n..2 * n].copy_from_slice(p0.as_slice());
    visit(0, &y);
    let mut rhs = HamiltonianRhs::new(sys);
    let mut rk = Rk4::new(2 * n + 1);
    let mut xs: Vec<DVector<f64>> = Vec::new();
    for j in 1..=steps {
        rk.step(&mut y, h, |_, s, ds| rhs.eval(s, ds))?;
        if sys.outside_guard(&y[..n]) || y[n..].iter().any(|v| !v.is_finite()) {
            let t = t_end * j as f64 / steps as f64;
            xs.push(DVector::from_column_slice(&y[..n]));
            return Err(DynamicsError::ExplosionGuard {
                time: t,
                trajectory: Box::new(Trajectory {
                    times: vec![t],
                    states: xs,
                    converged: false,
                }),
            });
        }
        visit(j, &y);
    }
    *out = Some(FlowEnd {
        x: DVector::from_column_slice(&y[..n]),
        p: DVector::from_column_slice(&y[n..2 * n]),
        cost: y[2 * n],
    });
    Ok(())
}

fn flow_arc(
    sys: &AffineSystem,
    p0: &DVector<f64>,
    steps: usize,
) -> Result<ExtremalArc, DynamicsError> {
    let n = sys.n();
    let t_end = sys.horizon();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut covectors = Vec::with_capacity(steps + 1);
    let mut knots: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut end = None;
    run_flow(
        sys,
        p0,
        steps,
        |j, y| {
            times.push(t_end * j as f64 / steps as f64);
            states.push(DVector::from_column_slice(&y[..n]));
            covectors.push(DVector::from_column_slice(&y[n..2 * n]));
            knots.push(y.to_vec());
        },
        &mut end,
    )?;
    let end = end.expect("flow finished");
    let mut rhs = HamiltonianRhs::new(sys);
    let controls = knots
        .iter()
        .map(|y| {
            rhs.control(&y[..n], &y[n..2 * n])?;
            Ok(DVector::from_column_slice(&rhs.u))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ExtremalArc {
        times,
        states,
        covectors,
        controls,
        cost: end.cost,
        p0norm: NORMAL_P0,
    })
}

/// Normal extremal from `(x0, p(0))` with the system's flow step.
pub fn normal_flow(sys: &AffineSystem, p0: &DVector<f64>) -> Result<ExtremalArc, DynamicsError> {
    flow_arc(sys, p0, steps_for(sys))
}

/// Same as [`normal_flow`] with an explicit step count.
pub fn normal_flow_steps(
    sys: &AffineSystem,
    p0: &DVector<f64>,
    steps: usize,
) -> Result<ExtremalArc, DynamicsError> {
    flow_arc(sys, p0, steps.max(1))
}

/// `Phi(p(0))` sampled onto the system's control grid.
pub fn phi(sys: &AffineSystem, p0: &DVector<f64>) -> Result<ControlGrid, DynamicsError> {
    phi_on_grid(sys, p0, sys.settings.intervals)
}

/// `Phi(p(0))` on a grid of `intervals` intervals: interval averages of the
/// induced control, by Simpson's rule on an oversampled flow.
pub fn phi_on_grid(
    sys: &AffineSystem,
    p0: &DVector<f64>,
    intervals: usize,
) -> Result<ControlGrid, DynamicsError> {
    let k = intervals.max(1);
    let mut os = sys.settings.oversample.max(2);
    if os % 2 == 1 {
        os += 1;
    }
    let arc = flow_arc(sys, p0, k * os)?;
    let m = sys.m();
    let dt = sys.horizon() / k as f64;
    let h = dt / os as f64;
    let values = nalgebra::DMatrix::from_fn(k, m, |row, i| {
        let mut acc = 0.0;
        for s in 0..=os {
            let w = if s == 0 || s == os {
                1.0
            } else if s % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * arc.controls[row * os + s][i];
        }
        acc * h / 3.0 / dt
    });
    ControlGrid::new(values, sys.horizon())
}

/// `exp(p(0))`: endpoint of the continuous normal flow.
pub fn exp_map(sys: &AffineSystem, p0: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    flow_end(sys, p0, steps_for(sys)).map(|e| e.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::endpoint;
    use crate::systems;
    use nalgebra::dvector;

    #[test]
    fn lambda_zero_branch_is_constant_control() {
        let sys = systems::working();
        let c = 0.7;
        let arc = normal_flow(&sys, &dvector![0.0, c]).unwrap();
        let e = arc.endpoint();
        assert!((e[0] - (1.0 + c * c / 3.0)).abs() < 1e-12);
        assert!((e[1] - c).abs() < 1e-12);
        assert!((arc.cost - c * c).abs() < 1e-12);
        assert!(arc.controls.iter().all(|u| (u[0] - c).abs() < 1e-14));
    }

    #[test]
    fn working_example_equations() {
        // x' = 1 + y^2, y' = p_y, p_x' = 0, p_y' = -2 y p_x
        let sys = systems::working();
        let mut rhs = HamiltonianRhs::new(&sys);
        let y = [0.3, -0.4, 1.7, 0.9, 0.0];
        let mut dy = [0.0; 5];
        rhs.eval(&y, &mut dy).unwrap();
        let expect = [1.0 + 0.16, 0.9, 0.0, -2.0 * -0.4 * 1.7, 0.81];
        for (a, b) in dy.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{dy:?}");
        }
    }

    #[test]
    fn heisenberg_straight_lines() {
        let sys = systems::heisenberg();
        let arc = normal_flow(&sys, &dvector![0.3, -0.8, 0.0]).unwrap();
        assert!((arc.endpoint() - dvector![0.3, -0.8, 0.0]).norm() < 1e-12);
        assert!((arc.cost - 0.73).abs() < 1e-12);
    }

    #[test]
    fn zero_covector() {
        let sys = systems::working();
        assert!(phi(&sys, &dvector![0.0, 0.0])
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
        assert!((exp_map(&sys, &dvector![0.0, 0.0]).unwrap() - dvector![1.0, 0.0]).norm() < 1e-14);
        let u = phi(&sys, &dvector![0.0, 0.4]).unwrap();
        assert!(u.values().iter().all(|v| (v - 0.4).abs() < 1e-14));
    }

    #[test]
    fn phi_round_trip() {
        let sys = systems::working();
        let p0 = dvector![-1.3, 0.8];
        let u = phi_on_grid(&sys, &p0, 512).unwrap();
        let e_grid = endpoint(&sys, &u).unwrap();
        let e_flow = exp_map(&sys, &p0).unwrap();
        assert!((e_grid - e_flow).norm() < 1e-6);
    }
}
