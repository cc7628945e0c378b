use serde::{Deserialize, Serialize};

/// Numerical knobs shared by every solver. A system definition file may
/// override any of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    /// Control grid interval count K.
    pub intervals: usize,
    /// RK4 substeps per control interval.
    pub oversample: usize,
    /// Step of the normal Hamiltonian flow.
    pub flow_step: f64,
    /// Defect below which a shooting solution counts as converged.
    pub shoot_tol: f64,
    /// Covector distance under which two shooting solutions are merged.
    pub dedup_tol: f64,
    pub seed_radius: f64,
    pub seed_count: usize,
    pub shoot_max_iter: usize,
    /// Threshold on the projectivized p0 coordinate for abnormality.
    pub abn_tol: f64,
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Endpoint defect accepted by the direct method.
    pub target_tol: f64,
    /// Relative cost tolerance of level-set root finding.
    pub level_tol: f64,
    pub h_bracket: f64,
    /// Largest penalty weight tried by the direct method.
    pub mu_max: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            intervals: 64,
            oversample: 32,
            flow_step: 1e-3,
            shoot_tol: 1e-9,
            dedup_tol: 1e-6,
            seed_radius: 10.0,
            seed_count: 64,
            shoot_max_iter: 50,
            abn_tol: 1e-6,
            rank_tol: 1e-8,
            target_tol: 1e-6,
            level_tol: 1e-9,
            h_bracket: 1e-5,
            mu_max: 1e12,
        }
    }
}
