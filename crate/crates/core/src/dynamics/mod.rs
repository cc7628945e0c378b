//! Affine control systems under piecewise-constant controls: the end-point
//! map, the cost, and the Jacobian of the end-point map from the
//! variational equation.

mod integrate;
mod variational;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::csvio::{self, CsvError};
use crate::expr::tape::Scratch;
use crate::expr::EvalError;
use crate::field::ExprField;
use crate::settings::Settings;

pub use integrate::{endpoint, integrate, Trajectory};
pub use variational::{variational_jacobian, VariationalFrame};

pub const DEFAULT_GUARD_RADIUS: f64 = 1e6;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SystemError {
    #[error("state dimension must be at least 1")]
    NoState,
    #[error("at least one controlled field is required")]
    NoControls,
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("field {index} has {got} coordinates, expected {expected}")]
    FieldArity {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("initial state has dimension {got}, expected {expected}")]
    InitialState { expected: usize, got: usize },
    #[error("guard radius must be positive, got {0}")]
    Guard(f64),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum DynamicsError {
    /// The state left the guard ball (or stopped being finite) at `time`:
    /// numerically the control lies outside the domain of the end-point map.
    #[error("explosion guard triggered at t = {time}")]
    ExplosionGuard {
        time: f64,
        trajectory: Box<Trajectory>,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("control grid {0}")]
    ControlMismatch(String),
}

impl DynamicsError {
    pub fn explosion_time(&self) -> Option<f64> {
        match self {
            DynamicsError::ExplosionGuard { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// `x' = f0(x) + sum_i u_i f_i(x)` on [0, T] starting at `x0`.
#[derive(Debug, Clone)]
pub struct AffineSystem {
    pub name: String,
    drift: ExprField,
    fields: Vec<ExprField>,
    horizon: f64,
    x0: DVector<f64>,
    guard_radius: f64,
    pub settings: Settings,
    drift_is_zero: bool,
}

impl AffineSystem {
    pub fn new(
        name: impl Into<String>,
        drift: ExprField,
        fields: Vec<ExprField>,
        horizon: f64,
    ) -> Result<AffineSystem, SystemError> {
        use crate::field::VectorField;
        let n = drift.dim();
        if n == 0 {
            return Err(SystemError::NoState);
        }
        if fields.is_empty() {
            return Err(SystemError::NoControls);
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SystemError::Horizon(horizon));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.dim() != n {
                return Err(SystemError::FieldArity {
                    index: i + 1,
                    expected: n,
                    got: f.dim(),
                });
            }
        }
        let drift_is_zero = drift.is_zero();
        Ok(AffineSystem {
            name: name.into(),
            drift,
            fields,
            horizon,
            x0: DVector::zeros(n),
            guard_radius: DEFAULT_GUARD_RADIUS,
            settings: Settings::default(),
            drift_is_zero,
        })
    }

    pub fn with_x0(mut self, x0: DVector<f64>) -> Result<AffineSystem, SystemError> {
        if x0.len() != self.n() {
            return Err(SystemError::InitialState {
                expected: self.n(),
                got: x0.len(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_guard_radius(mut self, r: f64) -> Result<AffineSystem, SystemError> {
        if !(r > 0.0) {
            return Err(SystemError::Guard(r));
        }
        self.guard_radius = r;
        Ok(self)
    }

    pub fn with_settings(mut self, settings: Settings) -> AffineSystem {
        self.settings = settings;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<AffineSystem, SystemError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SystemError::Horizon(horizon));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn guard_radius(&self) -> f64 {
        self.guard_radius
    }

    pub fn drift(&self) -> &ExprField {
        &self.drift
    }

    pub fn fields(&self) -> &[ExprField] {
        &self.fields
    }

    pub fn uses_division(&self) -> bool {
        self.drift.uses_division() || self.fields.iter().any(ExprField::uses_division)
    }

    /// Zero control on the system's default grid.
    pub fn zero_control(&self) -> ControlGrid {
        ControlGrid::zeros(self.settings.intervals, self.m(), self.horizon)
    }

    pub(crate) fn evaluator(&self) -> Evaluator<'_> {
        let n = self.n();
        Evaluator {
            sys: self,
            scratch: Scratch::default(),
            tmp: vec![0.0; n],
            jac_tmp: vec![0.0; n * n],
        }
    }

    pub(crate) fn outside_guard(&self, x: &[f64]) -> bool {
        let mut s = 0.0;
        for v in x {
            if !v.is_finite() {
                return true;
            }
            s += v * v;
        }
        s.sqrt() > self.guard_radius
    }
}

/// Inner-loop evaluation of the system with reusable buffers.
pub(crate) struct Evaluator<'a> {
    pub(crate) sys: &'a AffineSystem,
    scratch: Scratch,
    tmp: Vec<f64>,
    jac_tmp: Vec<f64>,
}

impl Evaluator<'_> {
    /// `out = f0(x) + sum u_i f_i(x)`.
    pub(crate) fn rhs(&mut self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        if self.sys.drift_is_zero {
            out.fill(0.0);
        } else {
            self.sys.drift.eval_into(x, &mut self.scratch, out)?;
        }
        for (f, &ui) in self.sys.fields.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            f.eval_into(x, &mut self.scratch, &mut self.tmp)?;
            for (o, t) in out.iter_mut().zip(&self.tmp) {
                *o += ui * t;
            }
        }
        Ok(())
    }

    /// Right-hand side plus `A = df0 + sum u_i df_i` (row-major).
    pub(crate) fn rhs_jac(
        &mut self,
        x: &[f64],
        u: &[f64],
        out: &mut [f64],
        a: &mut [f64],
    ) -> Result<(), EvalError> {
        if self.sys.drift_is_zero {
            out.fill(0.0);
            a.fill(0.0);
        } else {
            self.sys.drift.jet_into(x, &mut self.scratch, out, a)?;
        }
        for (f, &ui) in self.sys.fields.iter().zip(u) {
            if ui == 0.0 {
                continue;
            }
            f.jet_into(x, &mut self.scratch, &mut self.tmp, &mut self.jac_tmp)?;
            for (o, t) in out.iter_mut().zip(&self.tmp) {
                *o += ui * t;
            }
            for (o, t) in a.iter_mut().zip(&self.jac_tmp) {
                *o += ui * t;
            }
        }
        Ok(())
    }

    /// Values of the controlled fields, field-major (`m × n`).
    pub(crate) fn field_values(&mut self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.sys.n();
        for (i, f) in self.sys.fields.iter().enumerate() {
            f.eval_into(x, &mut self.scratch, &mut out[i * n..(i + 1) * n])?;
        }
        Ok(())
    }

    /// Jets of drift (slot 0) and controlled fields (slots 1..=m).
    /// `vals` is `(m+1) × n`, `jacs` is `(m+1) × n × n`, row-major.
    pub(crate) fn all_jets(
        &mut self,
        x: &[f64],
        vals: &mut [f64],
        jacs: &mut [f64],
    ) -> Result<(), EvalError> {
        let n = self.sys.n();
        let nn = n * n;
        if self.sys.drift_is_zero {
            vals[..n].fill(0.0);
            jacs[..nn].fill(0.0);
        } else {
            self.sys
                .drift
                .jet_into(x, &mut self.scratch, &mut vals[..n], &mut jacs[..nn])?;
        }
        for (i, f) in self.sys.fields.iter().enumerate() {
            let s = i + 1;
            f.jet_into(
                x,
                &mut self.scratch,
                &mut vals[s * n..(s + 1) * n],
                &mut jacs[s * nn..(s + 1) * nn],
            )?;
        }
        Ok(())
    }
}

/// Piecewise-constant control on a uniform grid of `K` intervals over [0, T].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlGrid {
    horizon: f64,
    /// `K × m`; row k holds the control on `[kT/K, (k+1)T/K)`.
    #[serde(serialize_with = "crate::serde_vec::matrix")]
    values: DMatrix<f64>,
}

impl ControlGrid {
    pub fn new(values: DMatrix<f64>, horizon: f64) -> Result<ControlGrid, DynamicsError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(DynamicsError::ControlMismatch(
                "needs at least one interval and one channel".into(),
            ));
        }
        if !(horizon > 0.0) {
            return Err(DynamicsError::ControlMismatch(format!(
                "horizon {horizon} is not positive"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::ControlMismatch(
                "values must be finite".into(),
            ));
        }
        Ok(ControlGrid { horizon, values })
    }

    pub fn zeros(intervals: usize, channels: usize, horizon: f64) -> ControlGrid {
        ControlGrid {
            horizon,
            values: DMatrix::zeros(intervals.max(1), channels.max(1)),
        }
    }

    pub fn constant(intervals: usize, horizon: f64, value: &[f64]) -> ControlGrid {
        let k = intervals.max(1);
        ControlGrid {
            horizon,
            values: DMatrix::from_fn(k, value.len(), |_, i| value[i]),
        }
    }

    /// Control whose row k is `f(k)`.
    pub fn from_fn(
        intervals: usize,
        channels: usize,
        horizon: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> ControlGrid {
        ControlGrid {
            horizon,
            values: DMatrix::from_fn(intervals, channels, f),
        }
    }

    /// Flat vector in Jacobian column order: index `k * m + i`.
    pub fn from_flat(
        intervals: usize,
        channels: usize,
        horizon: f64,
        flat: &DVector<f64>,
    ) -> ControlGrid {
        ControlGrid::from_fn(intervals, channels, horizon, |k, i| flat[k * channels + i])
    }

    pub fn flat(&self) -> DVector<f64> {
        let (k, m) = self.values.shape();
        DVector::from_fn(k * m, |j, _| self.values[(j / m, j % m)])
    }

    pub fn intervals(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.intervals() as f64
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }

    /// Left endpoint of interval k.
    pub fn knot(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.intervals() as f64
    }

    /// `(T/K) sum values^2`.
    pub fn cost(&self) -> f64 {
        self.dt() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.cost().sqrt()
    }

    /// Gradient of the cost in flat column order: `2 (T/K) u`.
    pub fn cost_gradient(&self) -> DVector<f64> {
        self.flat() * (2.0 * self.dt())
    }

    /// CSV with header `t,u1,..,um`, one row per left knot.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        header.extend(csvio::numbered_header("u", self.channels()));
        let rows: Vec<Vec<f64>> = (0..self.intervals())
            .map(|k| {
                let mut r = vec![self.knot(k)];
                r.extend(self.row(k));
                r
            })
            .collect();
        csvio::write_table(&header, &rows)
    }

    /// Read the CSV written by [`ControlGrid::to_csv`]. Knot times must be
    /// the uniform grid `kT/K` for the given horizon.
    pub fn from_csv(text: &str, horizon: f64) -> Result<ControlGrid, CsvError> {
        let (header, rows) = csvio::read_table(text)?;
        if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
            return Err(CsvError::Header {
                expected: "t,u1,..".into(),
                got: header.join(","),
            });
        }
        let m = header.len() - 1;
        let expected = {
            let mut h = vec!["t".to_string()];
            h.extend(csvio::numbered_header("u", m));
            h
        };
        if header != expected {
            return Err(CsvError::Header {
                expected: expected.join(","),
                got: header.join(","),
            });
        }
        let k = rows.len();
        if k == 0 {
            return Err(CsvError::Empty);
        }
        for (i, r) in rows.iter().enumerate() {
            let t = horizon * i as f64 / k as f64;
            if (r[0] - t).abs() > 1e-12 * horizon.max(1.0) {
                return Err(CsvError::Invalid(format!(
                    "row {} has t = {}, expected uniform knot {t}",
                    i + 1,
                    r[0]
                )));
            }
        }
        let values = DMatrix::from_fn(k, m, |r, c| rows[r][c + 1]);
        ControlGrid::new(values, horizon).map_err(|e| CsvError::Invalid(e.to_string()))
    }
}

/// Quadratic cost `C(u) = int sum u_i^2`.
pub fn cost(u: &ControlGrid) -> f64 {
    u.cost()
}
