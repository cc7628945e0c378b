pub mod csvio;
pub mod dynamics;
pub mod expr;
pub mod extremal;
pub mod field;
pub mod linalg;
mod ode;
mod serde_vec;
pub mod settings;
pub mod systems;
pub mod value;
