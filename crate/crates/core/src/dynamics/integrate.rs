use nalgebra::DVector;
use serde::Serialize;

use super::{AffineSystem, ControlGrid, DynamicsError};
use crate::csvio::{self, CsvError};
use crate::ode::Rk4;

/// Sampled state trajectory on the RK4 substep grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    #[serde(serialize_with = "crate::serde_vec::vectors")]
    pub states: Vec<DVector<f64>>,
    /// False when the explosion guard cut the integration short.
    pub converged: bool,
}

impl Trajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// CSV with header `t,x1,..,xn`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend(csvio::numbered_header("x", n));
        let rows: Vec<Vec<f64>> = self
            .times
            .iter()
            .zip(&self.states)
            .map(|(t, x)| {
                let mut r = vec![*t];
                r.extend(x.iter());
                r
            })
            .collect();
        csvio::write_table(&header, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Trajectory, CsvError> {
        let (header, rows) = csvio::read_table(text)?;
        if header.first().map(String::as_str) != Some("t") {
            return Err(CsvError::Header {
                expected: "t,x1,..".into(),
                got: header.join(","),
            });
        }
        let times = rows.iter().map(|r| r[0]).collect();
        let states = rows
            .iter()
            .map(|r| DVector::from_column_slice(&r[1..]))
            .collect();
        Ok(Trajectory {
            times,
            states,
            converged: true,
        })
    }
}

pub(crate) fn check_control(sys: &AffineSystem, u: &ControlGrid) -> Result<(), DynamicsError> {
    if u.channels() != sys.m() {
        return Err(DynamicsError::ControlMismatch(format!(
            "has {} channels, system has {} controlled fields",
            u.channels(),
            sys.m()
        )));
    }
    if (u.horizon() - sys.horizon()).abs() > 1e-12 * sys.horizon() {
        return Err(DynamicsError::ControlMismatch(format!(
            "horizon {} differs from system horizon {}",
            u.horizon(),
            sys.horizon()
        )));
    }
    Ok(())
}

/// State trajectory of `sys` under `u`, sampled at every RK4 substep.
pub fn integrate(sys: &AffineSystem, u: &ControlGrid) -> Result<Trajectory, DynamicsError> {
    propagate(sys, u, true)
}

/// End-point map `E(u) = x_u(T)`.
pub fn endpoint(sys: &AffineSystem, u: &ControlGrid) -> Result<DVector<f64>, DynamicsError> {
    propagate(sys, u, false).map(|tr| tr.endpoint().clone())
}

fn propagate(
    sys: &AffineSystem,
    u: &ControlGrid,
    store: bool,
) -> Result<Trajectory, DynamicsError> {
    check_control(sys, u)?;
    let n = sys.n();
    let k = u.intervals();
    let os = sys.settings.oversample.max(1);
    let total = k * os;
    let t_end = sys.horizon();
    let h = t_end / total as f64;
    let mut ev = sys.evaluator();
    let mut rk = Rk4::new(n);
    let mut x: Vec<f64> = sys.x0().iter().copied().collect();
    let mut times = vec![0.0];
    let mut states = vec![DVector::from_column_slice(&x)];
    for interval in 0..k {
        let uk = u.row(interval);
        for sub in 0..os {
            rk.step(&mut x, h, |_, y, dy| ev.rhs(y, &uk, dy))?;
            let j = interval * os + sub + 1;
            let t = t_end * j as f64 / total as f64;
            if sys.outside_guard(&x) {
                times.push(t);
                states.push(DVector::from_column_slice(&x));
                return Err(DynamicsError::ExplosionGuard {
                    time: t,
                    trajectory: Box::new(Trajectory {
                        times,
                        states,
                        converged: false,
                    }),
                });
            }
            if store || j == total {
                times.push(t);
                states.push(DVector::from_column_slice(&x));
            }
        }
    }
    if !store {
        // Keep only the endpoint (plus the initial state for `endpoint()`).
        let last = states.pop().expect("final state");
        return Ok(Trajectory {
            times: vec![0.0, t_end],
            states: vec![states.swap_remove(0), last],
            converged: true,
        });
    }
    Ok(Trajectory {
        times,
        states,
        converged: true,
    })
}
