//! Vector fields, their jets, and Lie brackets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::expr::tape::{Scratch, Tape};
use crate::expr::{parse_field, EvalError, Expr, ParseError};

/// Default relative step for differencing bracket evaluators.
pub const H_BRACKET: f64 = 1e-5;

/// Value and Jacobian of a field at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: DVector<f64>,
    /// `jacobian[(i, j)] = d value_i / d x_j`.
    pub jacobian: DMatrix<f64>,
}

/// Anything that can be evaluated pointwise as a vector field on R^n.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>, EvalError>;

    /// Directional derivative `dF(x) v`.
    fn directional(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, EvalError>;
}

/// A field given by one parsed expression per coordinate.
#[derive(Debug, Clone)]
pub struct ExprField {
    exprs: Vec<Expr>,
    tape: Tape,
}

impl ExprField {
    pub fn new(exprs: Vec<Expr>) -> ExprField {
        let n = exprs.len();
        let tape = Tape::compile(&exprs, n);
        ExprField { exprs, tape }
    }

    pub fn parse<S: AsRef<str>>(coords: &[S], n: usize) -> Result<ExprField, ParseError> {
        Ok(ExprField::new(parse_field(coords, n)?))
    }

    pub fn zero(n: usize) -> ExprField {
        ExprField::new(vec![Expr::Const(0.0); n])
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn is_zero(&self) -> bool {
        self.exprs.iter().all(Expr::is_constant_zero)
    }

    pub fn uses_division(&self) -> bool {
        self.exprs.iter().any(Expr::uses_division)
    }

    pub fn jet(&self, x: &DVector<f64>) -> Result<FieldJet, EvalError> {
        let n = self.dim();
        check_dim(n, x.len())?;
        let mut value = DVector::zeros(n);
        let mut jac = vec![0.0; n * n];
        self.tape.eval_jet(
            x.as_slice(),
            &mut Scratch::default(),
            value.as_mut_slice(),
            &mut jac,
        )?;
        Ok(FieldJet {
            value,
            jacobian: DMatrix::from_row_slice(n, n, &jac),
        })
    }

    /// Allocation-free value evaluation for inner loops.
    pub(crate) fn eval_into(
        &self,
        x: &[f64],
        s: &mut Scratch,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        self.tape.eval(x, s, out)
    }

    /// Allocation-free jet evaluation; `jac` is row-major n×n.
    pub(crate) fn jet_into(
        &self,
        x: &[f64],
        s: &mut Scratch,
        out: &mut [f64],
        jac: &mut [f64],
    ) -> Result<(), EvalError> {
        self.tape.eval_jet(x, s, out, jac)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), EvalError> {
    if expected == got {
        Ok(())
    } else {
        Err(EvalError::Dimension { expected, got })
    }
}

/// Jet of a list of coordinate expressions at `x`.
pub fn eval_jet(field: &ExprField, x: &DVector<f64>) -> Result<FieldJet, EvalError> {
    field.jet(x)
}

impl VectorField for ExprField {
    fn dim(&self) -> usize {
        self.tape.outputs()
    }

    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        check_dim(self.dim(), x.len())?;
        let mut out = DVector::zeros(self.dim());
        self.tape
            .eval(x.as_slice(), &mut Scratch::default(), out.as_mut_slice())?;
        Ok(out)
    }

    fn directional(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        Ok(self.jet(x)?.jacobian * v)
    }
}

/// `[f, g](x) = dg(x) f(x) - df(x) g(x)`.
///
/// The value is exact when both operands are [`ExprField`]s. Derivatives of
/// a bracket (needed when it is itself bracketed again) are central
/// differences along the requested direction.
#[derive(Clone)]
pub struct LieBracket {
    f: Arc<dyn VectorField>,
    g: Arc<dyn VectorField>,
    h_rel: f64,
}

impl LieBracket {
    pub fn new(f: Arc<dyn VectorField>, g: Arc<dyn VectorField>) -> LieBracket {
        LieBracket {
            f,
            g,
            h_rel: H_BRACKET,
        }
    }

    pub fn with_step(mut self, h_rel: f64) -> LieBracket {
        self.h_rel = h_rel;
        self
    }
}

impl VectorField for LieBracket {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        let fx = self.f.value(x)?;
        let gx = self.g.value(x)?;
        Ok(self.g.directional(x, &fx)? - self.f.directional(x, &gx)?)
    }

    fn directional(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(DVector::zeros(self.dim()));
        }
        let h = self.h_rel * x.norm().max(1.0);
        let dir = v / vn;
        let plus = self.value(&(x + &dir * h))?;
        let minus = self.value(&(x - &dir * h))?;
        Ok((plus - minus) * (vn / (2.0 * h)))
    }
}

/// Bracket evaluator `[f, g]`; both fields must share a dimension.
pub fn lie_bracket(f: Arc<dyn VectorField>, g: Arc<dyn VectorField>) -> LieBracket {
    assert_eq!(
        f.dim(),
        g.dim(),
        "bracket of fields with different dimensions"
    );
    LieBracket::new(f, g)
}

/// `ad^k f . g`, i.e. `[f, [f, ... [f, g]]]` with `k` brackets.
pub fn ad(f: &Arc<dyn VectorField>, g: &Arc<dyn VectorField>, k: usize) -> Arc<dyn VectorField> {
    let mut out = g.clone();
    for _ in 0..k {
        out = Arc::new(lie_bracket(f.clone(), out));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn field(c: &[&str], n: usize) -> Arc<dyn VectorField> {
        Arc::new(ExprField::parse(c, n).unwrap())
    }

    #[test]
    fn working_drift_jet() {
        let f0 = ExprField::parse(&["1+y^2", "0"], 2).unwrap();
        let jet = eval_jet(&f0, &dvector![0.0, 2.0]).unwrap();
        assert_eq!(jet.value, dvector![5.0, 0.0]);
        assert_eq!(
            jet.jacobian,
            DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 0.0, 0.0])
        );
    }

    #[test]
    fn identity_jacobian() {
        let id = ExprField::parse(&["x", "y"], 2).unwrap();
        let jet = id.jet(&dvector![3.0, -7.5]).unwrap();
        assert_eq!(jet.jacobian, DMatrix::identity(2, 2));
    }

    #[test]
    fn self_bracket_vanishes() {
        let f = field(&["sin(y)", "x*z", "exp(x)"], 3);
        let b = lie_bracket(f.clone(), f.clone());
        assert_eq!(b.value(&dvector![0.2, 0.4, -1.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn martinet_flat_bracket() {
        let f1 = field(&["1", "0", "y^2/2"], 3);
        let f2 = field(&["0", "1", "0"], 3);
        let b = lie_bracket(f1, f2).value(&dvector![0.0, 0.3, 0.0]).unwrap();
        assert!((b - dvector![0.0, 0.0, -0.3]).norm() < 1e-15);
    }

    #[test]
    fn heisenberg_bracket() {
        let f1 = field(&["1", "0", "-y/2"], 3);
        let f2 = field(&["0", "1", "x/2"], 3);
        for x in [dvector![0.0, 0.0, 0.0], dvector![1.0, -2.0, 3.0]] {
            let b = lie_bracket(f1.clone(), f2.clone()).value(&x).unwrap();
            assert!((b - dvector![0.0, 0.0, 1.0]).norm() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = ExprField::parse(&["x", "y"], 2).unwrap();
        assert!(matches!(
            f.value(&dvector![1.0]),
            Err(EvalError::Dimension { .. })
        ));
    }

    #[test]
    fn division_error_propagates_through_bracket() {
        let f = field(&["1/x", "0"], 2);
        let g = field(&["0", "1"], 2);
        let b = lie_bracket(f, g);
        assert!(matches!(
            b.value(&dvector![0.0, 1.0]),
            Err(EvalError::DivisionByZero { .. })
        ));
    }
}
