//! Flat instruction tape for forward-mode jet evaluation.
//!
//! Every slot carries a value and its gradient with respect to all `n`
//! state variables, so one pass yields a field value and its full Jacobian
//! with no differencing.

use super::{EvalError, Expr};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Third member indexes `Tape::div_nodes` for error reporting.
    Div(usize, usize, usize),
    Pow(usize, u32),
    Sin(usize),
    Cos(usize),
    Exp(usize),
}

/// Compiled form of a list of expressions over `n` variables.
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    ops: Vec<Op>,
    outputs: Vec<usize>,
    div_nodes: Vec<String>,
}

/// Reusable buffers for [`Tape`] evaluation.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    vals: Vec<f64>,
    grads: Vec<f64>,
}

impl Tape {
    pub fn compile(exprs: &[Expr], n: usize) -> Tape {
        let mut tape = Tape {
            n,
            ops: Vec::new(),
            outputs: Vec::new(),
            div_nodes: Vec::new(),
        };
        for e in exprs {
            let slot = tape.emit(e);
            tape.outputs.push(slot);
        }
        tape
    }

    fn emit(&mut self, e: &Expr) -> usize {
        let op = match e {
            Expr::Const(c) => Op::Const(*c),
            Expr::Var(i) => Op::Var(*i),
            Expr::Neg(a) => Op::Neg(self.emit(a)),
            Expr::Add(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Mul(a, b)
            }
            Expr::Div(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                self.div_nodes.push(e.to_string());
                Op::Div(a, b, self.div_nodes.len() - 1)
            }
            Expr::Pow(a, k) => Op::Pow(self.emit(a), *k),
            Expr::Sin(a) => Op::Sin(self.emit(a)),
            Expr::Cos(a) => Op::Cos(self.emit(a)),
            Expr::Exp(a) => Op::Exp(self.emit(a)),
        };
        self.ops.push(op);
        self.ops.len() - 1
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Values only.
    pub fn eval(&self, x: &[f64], s: &mut Scratch, out: &mut [f64]) -> Result<(), EvalError> {
        let vals = &mut s.vals;
        vals.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i],
                Op::Neg(a) => -vals[a],
                Op::Add(a, b) => vals[a] + vals[b],
                Op::Sub(a, b) => vals[a] - vals[b],
                Op::Mul(a, b) => vals[a] * vals[b],
                Op::Div(a, b, node) => {
                    if vals[b] == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            node: self.div_nodes[node].clone(),
                        });
                    }
                    vals[a] / vals[b]
                }
                Op::Pow(a, k) => vals[a].powi(k as i32),
                Op::Sin(a) => vals[a].sin(),
                Op::Cos(a) => vals[a].cos(),
                Op::Exp(a) => vals[a].exp(),
            };
            vals.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = vals[slot];
        }
        Ok(())
    }

    /// Values and Jacobian. `jac` is row-major, `outputs × n`.
    pub fn eval_jet(
        &self,
        x: &[f64],
        s: &mut Scratch,
        out: &mut [f64],
        jac: &mut [f64],
    ) -> Result<(), EvalError> {
        let n = self.n;
        let Scratch { vals, grads } = s;
        vals.clear();
        grads.clear();
        grads.resize(self.ops.len() * n, 0.0);
        for (slot, op) in self.ops.iter().enumerate() {
            let (done, rest) = grads.split_at_mut(slot * n);
            let g = &mut rest[..n];
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => {
                    g[i] = 1.0;
                    x[i]
                }
                Op::Neg(a) => {
                    for (gi, ga) in g.iter_mut().zip(&done[a * n..a * n + n]) {
                        *gi = -ga;
                    }
                    -vals[a]
                }
                Op::Add(a, b) => {
                    for j in 0..n {
                        g[j] = done[a * n + j] + done[b * n + j];
                    }
                    vals[a] + vals[b]
                }
                Op::Sub(a, b) => {
                    for j in 0..n {
                        g[j] = done[a * n + j] - done[b * n + j];
                    }
                    vals[a] - vals[b]
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (vals[a], vals[b]);
                    for j in 0..n {
                        g[j] = done[a * n + j] * vb + va * done[b * n + j];
                    }
                    va * vb
                }
                Op::Div(a, b, node) => {
                    let (va, vb) = (vals[a], vals[b]);
                    if vb == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            node: self.div_nodes[node].clone(),
                        });
                    }
                    let q = va / vb;
                    for j in 0..n {
                        g[j] = (done[a * n + j] - q * done[b * n + j]) / vb;
                    }
                    q
                }
                Op::Pow(a, k) => {
                    let va = vals[a];
                    let d = if k == 1 {
                        1.0
                    } else {
                        k as f64 * va.powi(k as i32 - 1)
                    };
                    for j in 0..n {
                        g[j] = d * done[a * n + j];
                    }
                    va.powi(k as i32)
                }
                Op::Sin(a) => {
                    let (sv, cv) = vals[a].sin_cos();
                    for j in 0..n {
                        g[j] = cv * done[a * n + j];
                    }
                    sv
                }
                Op::Cos(a) => {
                    let (sv, cv) = vals[a].sin_cos();
                    for j in 0..n {
                        g[j] = -sv * done[a * n + j];
                    }
                    cv
                }
                Op::Exp(a) => {
                    let ev = vals[a].exp();
                    for j in 0..n {
                        g[j] = ev * done[a * n + j];
                    }
                    ev
                }
            };
            vals.push(v);
        }
        for (row, &slot) in self.outputs.iter().enumerate() {
            out[row] = vals[slot];
            jac[row * n..row * n + n].copy_from_slice(&grads[slot * n..slot * n + n]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_field;

    #[test]
    fn jet_agrees_with_symbolic_derivative() {
        let exprs = parse_field(&["x*y^3 - sin(x)/(2+y)", "exp(x*y)", "-(x+y)^2"], 3).unwrap();
        let tape = Tape::compile(&exprs, 3);
        let x = [0.4, -0.9, 1.3];
        let mut s = Scratch::default();
        let mut val = [0.0; 3];
        let mut jac = [0.0; 9];
        tape.eval_jet(&x, &mut s, &mut val, &mut jac).unwrap();
        for (i, e) in exprs.iter().enumerate() {
            assert!((val[i] - e.eval(&x).unwrap()).abs() < 1e-15);
            for j in 0..3 {
                let d = e.derivative(j).eval(&x).unwrap();
                assert!((jac[i * 3 + j] - d).abs() < 1e-13 * (1.0 + d.abs()));
            }
        }
        let mut v2 = [0.0; 3];
        tape.eval(&x, &mut s, &mut v2).unwrap();
        assert_eq!(val, v2);
    }
}
