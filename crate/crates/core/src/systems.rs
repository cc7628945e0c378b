//! Named built-in systems.

use crate::dynamics::AffineSystem;
use crate::field::ExprField;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = [
    "working",
    "heisenberg",
    "martinet-flat",
    "double-integrator",
];

fn field(coords: &[&str], n: usize) -> ExprField {
    ExprField::parse(coords, n).expect("built-in field parses")
}

fn make(name: &str, n: usize, drift: &[&str], fields: &[&[&str]], horizon: f64) -> AffineSystem {
    AffineSystem::new(
        name,
        field(drift, n),
        fields.iter().map(|f| field(f, n)).collect(),
        horizon,
    )
    .expect("built-in system is valid")
}

/// `x' = 1 + y^2`, `y' = u` on [0, 1]. The zero control is the only
/// abnormal one and ends at `A = (1, 0)`.
pub fn working() -> AffineSystem {
    make("working", 2, &["1+y^2", "0"], &[&["0", "1"]], 1.0)
}

/// `f1 = dx - (y/2) dz`, `f2 = dy + (x/2) dz`.
pub fn heisenberg() -> AffineSystem {
    make(
        "heisenberg",
        3,
        &["0", "0", "0"],
        &[&["1", "0", "-y/2"], &["0", "1", "x/2"]],
        1.0,
    )
}

/// Flat Martinet: `f1 = dx + (y^2/2) dz`, `f2 = dy`.
pub fn martinet_flat() -> AffineSystem {
    make(
        "martinet-flat",
        3,
        &["0", "0", "0"],
        &[&["1", "0", "y^2/2"], &["0", "1", "0"]],
        1.0,
    )
}

/// `x1' = x2`, `x2' = u`.
pub fn double_integrator() -> AffineSystem {
    make("double-integrator", 2, &["x2", "0"], &[&["0", "1"]], 1.0)
}

/// `x' = x^2 + u` on [0, 2]; `u = 1` blows up at `t = pi/2`.
pub fn riccati() -> AffineSystem {
    make("riccati", 1, &["x^2"], &[&["1"]], 2.0)
}

/// `x' = u` in dimension `n` with `m = n` (every control is regular).
pub fn single_integrator(n: usize) -> AffineSystem {
    let names: Vec<String> = (0..n).map(|_| "0".to_string()).collect();
    let drift = ExprField::parse(&names, n).expect("zero drift");
    let fields = (0..n)
        .map(|i| {
            let c: Vec<&str> = (0..n).map(|j| if i == j { "1" } else { "0" }).collect();
            field(&c, n)
        })
        .collect();
    AffineSystem::new("single-integrator", drift, fields, 1.0).expect("valid")
}

pub fn builtin(name: &str) -> Option<AffineSystem> {
    match name {
        "working" => Some(working()),
        "heisenberg" => Some(heisenberg()),
        "martinet-flat" => Some(martinet_flat()),
        "double-integrator" => Some(double_integrator()),
        _ => None,
    }
}

pub fn all_builtins() -> Vec<AffineSystem> {
    BUILTIN_NAMES.iter().filter_map(|n| builtin(n)).collect()
}
