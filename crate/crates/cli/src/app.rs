//! Subcommands. Every command produces one JSON document; the text mode
//! prints a short summary, and CSV artifacts go to `--out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value as Json};

use ocp_core::csvio::{fmt_num, parse_inline_vector};
use ocp_core::dynamics::{
    integrate, variational_jacobian, AffineSystem, ControlGrid, DynamicsError,
};
use ocp_core::extremal::{
    kalman_regularity, lagrange_multipliers, normal_flow, pontryagin_cone, shoot_with, ShootOptions,
};
use ocp_core::linalg;
use ocp_core::value::{
    level_set_sample, properness_scan, tangency_fit_points, value_at, LevelSetCloud, PointFlag,
    Value, ValueError,
};

use crate::json;
use crate::sysdef::{load_system, SysDefError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "ocp",
    version,
    about = "End-point maps, extremals and value functions of affine control systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// System definition file, or builtin:NAME.
    #[arg(long, global = true)]
    pub system: Option<String>,
    /// Write the command's CSV artifact here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print a JSON document instead of the text summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// Offset into the shooting seed sequence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the state under a control; CSV `t,x1..xn`.
    Integrate {
        /// Control CSV `t,u1..um`, or `zero`.
        #[arg(long)]
        control: String,
    },
    /// End point and cost of a control.
    Endpoint {
        /// Control CSV `t,u1..um`, or `zero`.
        #[arg(long)]
        control: String,
    },
    /// Jacobian of the end-point map at a control.
    Jacobian {
        /// Control CSV `t,u1..um`, or `zero`.
        #[arg(long)]
        control: String,
    },
    /// Normal extremal from an initial covector; CSV `t,x..,p..,u..`.
    Flow {
        /// Initial covector, comma-separated.
        #[arg(long)]
        p0: String,
    },
    /// Initial covectors of normal extremals reaching a target.
    Shoot {
        /// Target state, comma-separated.
        #[arg(long)]
        target: String,
        /// Extra seed tried before the sweep.
        #[arg(long)]
        p0: Option<String>,
    },
    /// Value function at a target; CSV of the witness control.
    Value {
        /// Target state, comma-separated.
        #[arg(long)]
        target: String,
    },
    /// Sample the level set S = r; CSV cloud.
    Sphere {
        /// Level of the value function.
        #[arg(long)]
        r: f64,
        /// Number of covector directions.
        #[arg(long, default_value_t = 256)]
        count: usize,
    },
    /// Covector norms along base + delta * direction.
    ScanProper {
        /// Base point.
        #[arg(long)]
        target: String,
        /// Offset direction.
        #[arg(long)]
        direction: String,
        /// Comma-separated offsets.
        #[arg(long, default_value = "1e-2,1e-3,1e-4")]
        deltas: String,
    },
    /// Chord angles of a cloud against a hyperplane through a point.
    Tangency {
        /// Cloud CSV written by `sphere`.
        #[arg(long)]
        cloud: PathBuf,
        /// Base point of the hyperplane.
        #[arg(long)]
        target: String,
        /// Hyperplane normal.
        #[arg(long)]
        direction: String,
    },
    /// Lagrange multipliers and corank at a control.
    Classify {
        /// Control CSV `t,u1..um`, or `zero`.
        #[arg(long)]
        control: String,
    },
    /// Kalman rank test of the linearization at the initial state.
    Kalman,
    /// Iterated brackets along the reference trajectory (m = 2).
    Cone {
        /// Time on the reference trajectory; defaults to T.
        #[arg(long)]
        t: Option<f64>,
        /// Highest bracket order.
        #[arg(long, default_value_t = 3)]
        kmax: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Integrate { .. } => "integrate",
            Command::Endpoint { .. } => "endpoint",
            Command::Jacobian { .. } => "jacobian",
            Command::Flow { .. } => "flow",
            Command::Shoot { .. } => "shoot",
            Command::Value { .. } => "value",
            Command::Sphere { .. } => "sphere",
            Command::ScanProper { .. } => "scan-proper",
            Command::Tangency { .. } => "tangency",
            Command::Classify { .. } => "classify",
            Command::Kalman => "kalman",
            Command::Cone { .. } => "cone",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<SysDefError> for CliError {
    fn from(e: SysDefError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::ControlMismatch(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ValueError> for CliError {
    fn from(e: ValueError) -> Self {
        match e {
            ValueError::Dynamics(d) => d.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

/// What a command hands back for printing.
struct Outcome {
    result: Json,
    text: Vec<(String, String)>,
    csv: Option<String>,
    /// Set when the command ran but did not converge.
    failure: Option<String>,
}

impl Outcome {
    fn new(result: Json) -> Outcome {
        Outcome {
            result,
            text: Vec::new(),
            csv: None,
            failure: None,
        }
    }

    fn line(mut self, key: &str, value: String) -> Outcome {
        self.text.push((key.to_string(), value));
        self
    }
}

fn to_json<T: Serialize>(v: &T) -> Json {
    serde_json::to_value(v).expect("report serializes")
}

fn vec_text(v: &DVector<f64>) -> String {
    v.iter().map(|c| fmt_num(*c)).collect::<Vec<_>>().join(",")
}

fn vec_json(v: &DVector<f64>) -> Json {
    Json::from(v.iter().copied().collect::<Vec<f64>>())
}

fn matrix_json(m: &DMatrix<f64>) -> Json {
    Json::from(
        m.row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn parse_vector(text: &str, what: &str, n: Option<usize>) -> Result<DVector<f64>, CliError> {
    let v = parse_inline_vector(text).map_err(|e| CliError::Input(format!("--{what}: {e}")))?;
    if let Some(n) = n {
        if v.len() != n {
            return Err(CliError::Input(format!(
                "--{what} has {} entries, expected {n}",
                v.len()
            )));
        }
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(CliError::Input(format!("--{what} must be finite")));
    }
    Ok(DVector::from_vec(v))
}

fn load_control(sys: &AffineSystem, spec: &str) -> Result<ControlGrid, CliError> {
    let u = if spec == "zero" {
        sys.zero_control()
    } else {
        let text =
            std::fs::read_to_string(spec).map_err(|e| CliError::Input(format!("{spec}: {e}")))?;
        ControlGrid::from_csv(&text, sys.horizon())
            .map_err(|e| CliError::Input(format!("{spec}: {e}")))?
    };
    if u.channels() != sys.m() {
        return Err(CliError::Input(format!(
            "control has {} channels, system has m = {}",
            u.channels(),
            sys.m()
        )));
    }
    Ok(u)
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn run(cli: &Cli, out: &mut impl Write) -> Result<(), CliError> {
    let spec = cli
        .system
        .as_deref()
        .ok_or_else(|| CliError::Input("--system is required".into()))?;
    let sys = load_system(spec)?;
    if sys.uses_division() {
        eprintln!("warning: system '{}' uses division; fields may be singular where a denominator vanishes", sys.name);
    }
    let outcome = execute(cli, &sys)?;

    if let (Some(path), Some(csv)) = (&cli.out, &outcome.csv) {
        write_file(path, csv)?;
    }
    let io = |e: std::io::Error| CliError::Input(format!("stdout: {e}"));
    if cli.json {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": cli.command.name(),
            "system": sys.name,
            "seed": cli.seed,
            "ok": outcome.failure.is_none(),
            "result": outcome.result,
        });
        out.write_all(json::render(&doc).as_bytes()).map_err(io)?;
    } else if cli.out.is_none() && outcome.text.is_empty() {
        if let Some(csv) = &outcome.csv {
            out.write_all(csv.as_bytes()).map_err(io)?;
        }
    } else {
        for (k, v) in &outcome.text {
            writeln!(out, "{k}: {v}").map_err(io)?;
        }
    }
    match outcome.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(()),
    }
}

fn execute(cli: &Cli, sys: &AffineSystem) -> Result<Outcome, CliError> {
    let n = sys.n();
    match &cli.command {
        Command::Integrate { control } => {
            let u = load_control(sys, control)?;
            let traj = integrate(sys, &u)?;
            let mut o = Outcome::new(json!({
                "endpoint": vec_json(traj.endpoint()),
                "cost": u.cost(),
                "samples": traj.times.len(),
            }));
            o.csv = Some(traj.to_csv());
            if cli.out.is_some() {
                o = o
                    .line("endpoint", vec_text(traj.endpoint()))
                    .line("cost", fmt_num(u.cost()));
            }
            Ok(o)
        }
        Command::Endpoint { control } => {
            let u = load_control(sys, control)?;
            let x = ocp_core::dynamics::endpoint(sys, &u)?;
            Ok(
                Outcome::new(json!({"endpoint": vec_json(&x), "cost": u.cost()}))
                    .line("endpoint", vec_text(&x))
                    .line("cost", fmt_num(u.cost())),
            )
        }
        Command::Jacobian { control } => {
            let u = load_control(sys, control)?;
            let (de, frame) = variational_jacobian(sys, &u)?;
            let sv = linalg::singular_values(&de);
            let rank = linalg::rank(&de, sys.settings.rank_tol);
            Ok(Outcome::new(json!({
                "endpoint": vec_json(&frame.endpoint),
                "jacobian": matrix_json(&de),
                "singular_values": sv,
                "rank": rank,
                "corank": n - rank,
            }))
            .line("endpoint", vec_text(&frame.endpoint))
            .line("shape", format!("{}x{}", de.nrows(), de.ncols()))
            .line(
                "singular_values",
                sv.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(","),
            )
            .line("rank", rank.to_string())
            .line("corank", (n - rank).to_string()))
        }
        Command::Flow { p0 } => {
            let p0 = parse_vector(p0, "p0", Some(n))?;
            let arc = normal_flow(sys, &p0)?;
            let eval = |e: ocp_core::expr::EvalError| CliError::Numerical(e.to_string());
            let h = arc.hamiltonian(sys).map_err(eval)?;
            let drift = h.iter().map(|v| (v - h[0]).abs()).fold(0.0, f64::max);
            let law = arc.control_law_residual(sys).map_err(eval)?;
            let mut o = Outcome::new(json!({
                "endpoint": vec_json(arc.endpoint()),
                "final_covector": vec_json(arc.final_covector()),
                "cost": arc.cost,
                "hamiltonian_drift": drift,
                "control_law_residual": law,
            }));
            o.csv = Some(arc.to_csv());
            if cli.out.is_some() {
                o = o
                    .line("endpoint", vec_text(arc.endpoint()))
                    .line("cost", fmt_num(arc.cost))
                    .line("hamiltonian_drift", fmt_num(drift));
            }
            Ok(o)
        }
        Command::Shoot { target, p0 } => {
            let target = parse_vector(target, "target", Some(n))?;
            let seeds = match p0 {
                Some(p) => vec![parse_vector(p, "p0", Some(n))?],
                None => Vec::new(),
            };
            let mut opts = ShootOptions::from_system(sys);
            opts.sweep_offset = cli.seed;
            let rep = shoot_with(sys, &target, &seeds, &opts);
            let mut o = Outcome::new(to_json(&rep))
                .line("solutions", rep.solutions.len().to_string())
                .line("best_defect", fmt_num(rep.best_defect));
            for (i, s) in rep.solutions.iter().enumerate() {
                o = o.line(
                    &format!("p0[{i}]"),
                    format!("{} cost {}", vec_text(&s.p0), fmt_num(s.cost)),
                );
            }
            if rep.solutions.is_empty() {
                o.failure = Some(format!(
                    "shooting did not converge (best defect {})",
                    fmt_num(rep.best_defect)
                ));
            }
            Ok(o)
        }
        Command::Value { target } => {
            let target = parse_vector(target, "target", Some(n))?;
            let res = value_at(sys, &target)?;
            let s_text = match res.value {
                Value::Finite { s } => fmt_num(s),
                Value::Unreachable => "unreachable".to_string(),
            };
            let mut o = Outcome::new(json!({
                "value": to_json(&res.value),
                "method": to_json(&res.method),
                "witness_zero": res.witness.as_ref().map(|w| w.values().iter().all(|v| *v == 0.0)),
                "witness_cost": res.witness.as_ref().map(ControlGrid::cost),
                "witness_p0": res.witness_p0.as_ref().map(vec_json),
                "shooting_cost": res.shooting_cost,
                "direct_cost": res.direct_cost,
                "best_defect": res.best_defect,
                "shooting_solutions": res.shooting_solutions,
            }))
            .line("S", s_text);
            if let Some(w) = &res.witness {
                let zero = w.values().iter().all(|v| *v == 0.0);
                o = o.line(
                    "witness",
                    if zero {
                        "zero control".into()
                    } else {
                        format!("cost {}", fmt_num(w.cost()))
                    },
                );
                o.csv = Some(w.to_csv());
            }
            Ok(o)
        }
        Command::Sphere { r, count } => {
            let cloud = level_set_sample(sys, *r, *count)?;
            let mut o = Outcome::new(cloud_json(&cloud));
            o.csv = Some(cloud.to_csv());
            if cli.out.is_some() {
                o = o
                    .line("points", cloud.points.len().to_string())
                    .line("sphere_points", cloud.sphere_points().count().to_string())
                    .line("skipped", cloud.skipped.to_string())
                    .line("unresolved", cloud.unresolved.to_string());
            }
            Ok(o)
        }
        Command::ScanProper {
            target,
            direction,
            deltas,
        } => {
            let base = parse_vector(target, "target", Some(n))?;
            let dir = parse_vector(direction, "direction", Some(n))?;
            let deltas = parse_vector(deltas, "deltas", None)?;
            if deltas.is_empty() || deltas.iter().any(|d| *d <= 0.0) {
                return Err(CliError::Input("--deltas must be positive".into()));
            }
            let scan = properness_scan(sys, &base, &dir, deltas.as_slice())?;
            let mut o = Outcome::new(to_json(&scan));
            for row in &scan.rows {
                let show = |v: Option<f64>| v.map_or_else(|| "none".to_string(), fmt_num);
                o = o.line(
                    &format!("delta {}", fmt_num(row.delta)),
                    format!("pnorm {} p0proj {}", show(row.pnorm), show(row.p0proj)),
                );
            }
            o.csv = Some(scan.to_csv());
            if scan.rows.iter().any(|r| r.pnorm.is_none()) {
                o.failure = Some("shooting failed for at least one delta".into());
            }
            Ok(o)
        }
        Command::Tangency {
            cloud,
            target,
            direction,
        } => {
            let a = parse_vector(target, "target", Some(n))?;
            let normal = parse_vector(direction, "direction", Some(n))?;
            let text = std::fs::read_to_string(cloud)
                .map_err(|e| CliError::Input(format!("{}: {e}", cloud.display())))?;
            let points = LevelSetCloud::points_from_csv(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", cloud.display())))?;
            let pts: Vec<DVector<f64>> = points
                .iter()
                .filter(|p| p.flag == PointFlag::Sphere)
                .map(|p| p.endpoint.clone())
                .collect();
            if pts.first().is_some_and(|p| p.len() != n) {
                return Err(CliError::Input(
                    "cloud dimension does not match the system".into(),
                ));
            }
            let rep = tangency_fit_points(&pts, &a, &normal);
            let show = |v: Option<f64>| v.map_or_else(|| "none".to_string(), fmt_num);
            let mut o = Outcome::new(to_json(&rep));
            for w in &rep.windows {
                o = o.line(
                    &format!("window {}", fmt_num(w.radius)),
                    format!("{} points, max angle {}", w.count, show(w.max_angle_deg)),
                );
            }
            Ok(o.line("monotone", rep.monotone.to_string())
                .line("slope", show(rep.slope)))
        }
        Command::Classify { control } => {
            let u = load_control(sys, control)?;
            let rep = lagrange_multipliers(sys, &u)?;
            let verdict = if rep.is_abnormal() {
                "abnormal"
            } else {
                "regular"
            };
            let mut json = to_json(&rep);
            json["verdict"] = Json::from(verdict);
            let mut o = Outcome::new(json)
                .line("verdict", verdict.to_string())
                .line("corank", rep.corank.to_string());
            for (i, s) in rep.solutions.iter().enumerate() {
                o = o.line(
                    &format!("multiplier[{i}]"),
                    format!(
                        "pT {} p0 {} {}",
                        vec_text(&s.p_t),
                        fmt_num(s.p0),
                        s.classification.as_str()
                    ),
                );
            }
            Ok(o)
        }
        Command::Kalman => {
            let rep = kalman_regularity(sys).map_err(|e| CliError::Numerical(e.to_string()))?;
            Ok(Outcome::new(to_json(&rep))
                .line("verdict", rep.verdict.as_str().to_string())
                .line(
                    "rank",
                    rep.rank.map_or_else(|| "none".into(), |r| r.to_string()),
                ))
        }
        Command::Cone { t, kmax } => {
            let t = t.unwrap_or(sys.horizon());
            let rep = pontryagin_cone(sys, t, *kmax)?;
            Ok(Outcome::new(to_json(&rep))
                .line("point", vec_text(&rep.point))
                .line("span_dim", rep.span_dim.to_string())
                .line("h1", rep.h1.to_string())
                .line("h2", rep.h2.to_string())
                .line("h3", rep.h3.to_string()))
        }
    }
}

fn cloud_json(cloud: &LevelSetCloud) -> Json {
    json!({
        "r": cloud.r,
        "horizon": cloud.horizon,
        "count": cloud.count,
        "focused": cloud.focused,
        "delayed": cloud.delayed,
        "skipped": cloud.skipped,
        "unresolved": cloud.unresolved,
        "s_max": cloud.s_max,
        "level_tol": cloud.level_tol,
        "points": cloud.points.iter().map(|p| json!({
            "x": vec_json(&p.endpoint),
            "p": vec_json(&p.p0),
            "cost": p.cost,
            "pnorm": p.pnorm,
            "p0proj": p.p0proj,
            "flag": p.flag.as_str(),
        })).collect::<Vec<_>>(),
    })
}
