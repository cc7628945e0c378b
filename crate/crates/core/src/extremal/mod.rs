//! Normal extremals, shooting, multipliers and regularity tests.

mod cone;
mod flow;
mod kalman;
mod multipliers;
mod shoot;

pub use cone::{pontryagin_cone, ConeReport};
pub use flow::{exp_map, normal_flow, normal_flow_steps, phi, phi_on_grid, ExtremalArc, NORMAL_P0};
pub(crate) use flow::{flow_end, steps_for};
pub use kalman::{kalman_regularity, KalmanReport, KalmanVerdict};
pub(crate) use multipliers::multipliers_from;
pub use multipliers::{
    lagrange_multipliers, projectivize, MultiplierClass, MultiplierReport, MultiplierSolution,
};
pub use shoot::{seed_sweep, shoot, shoot_with, ShootOptions, ShootReport, ShootSolution};
