//! Analytic coordinate expressions.
//!
//! An [`Expr`] is the parsed form of one coordinate of a vector field. Trees
//! are immutable after construction; [`Expr::derivative`] returns a new tree,
//! so the class of expressions is closed under differentiation. Fast
//! value-plus-gradient evaluation goes through [`tape::Tape`].

mod parse;
pub mod tape;

use std::fmt;

pub use parse::{parse_expr, parse_field, ParseError, ParseErrorKind};

/// Expression node. Variables are stored zero-based; `Var(1)` prints as `x2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power by a positive integer literal.
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

/// Evaluation failure inside the analyticity domain check.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero in `{node}`")]
    DivisionByZero { node: String },
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

impl Expr {
    /// Largest variable index plus one (0 for constant trees).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.arity()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    /// True when some denominator depends on the state.
    pub fn uses_division(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Div(a, b) => a.uses_division() || b.has_var(),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.uses_division()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.uses_division() || b.uses_division()
            }
        }
    }

    fn has_var(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.has_var()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.has_var() || b.has_var()
            }
        }
    }

    pub fn is_constant_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    /// Recursive tree-walking evaluation. Slow path, used for checks and
    /// oracles; the integrators evaluate compiled tapes instead.
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero {
                        node: self.to_string(),
                    });
                }
                a.eval(x)? / den
            }
            Expr::Pow(a, k) => a.eval(x)?.powi(*k as i32),
            Expr::Sin(a) => a.eval(x)?.sin(),
            Expr::Cos(a) => a.eval(x)?.cos(),
            Expr::Exp(a) => a.eval(x)?.exp(),
        })
    }

    /// Symbolic partial derivative with respect to variable `var`.
    ///
    /// Constant folding keeps the result small but no further simplification
    /// is attempted.
    pub fn derivative(&self, var: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)),
            Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                div(num, pow((**b).clone(), 2))
            }
            Pow(a, k) => {
                let inner = a.derivative(var);
                let outer = if *k == 1 {
                    Const(1.0)
                } else {
                    mul(Const(*k as f64), pow((**a).clone(), k - 1))
                };
                mul(outer, inner)
            }
            Sin(a) => mul(Cos(a.clone()), a.derivative(var)),
            Cos(a) => neg(mul(Sin(a.clone()), a.derivative(var))),
            Exp(a) => mul(Exp(a.clone()), a.derivative(var)),
        }
    }
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if is_const(&b, 0.0) => a,
        _ if is_const(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        return Expr::Const(0.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, k: u32) -> Expr {
    match (k, &a) {
        (1, _) => a,
        (_, Expr::Const(c)) => Expr::Const(c.powi(k as i32)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Fully parenthesized below the top level; unambiguous and re-parseable.
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a}^{k})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}
