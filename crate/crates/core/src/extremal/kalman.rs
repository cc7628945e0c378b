//! Linear-test regularity at an equilibrium of the drift.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::AffineSystem;
use crate::expr::EvalError;
use crate::field::VectorField;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KalmanVerdict {
    Regular,
    AbnormalCandidate,
    /// The drift does not vanish at the initial state.
    Inapplicable,
}

impl KalmanVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            KalmanVerdict::Regular => "regular",
            KalmanVerdict::AbnormalCandidate => "abnormal-candidate",
            KalmanVerdict::Inapplicable => "inapplicable",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KalmanReport {
    pub verdict: KalmanVerdict,
    /// Rank of `(B | AB | .. | A^{n-1} B)`; absent when inapplicable.
    pub rank: Option<usize>,
    pub n: usize,
    pub drift_norm: f64,
}

/// Drift values below this norm count as an equilibrium.
const EQUILIBRIUM_TOL: f64 = 1e-12;

pub fn kalman_regularity(sys: &AffineSystem) -> Result<KalmanReport, EvalError> {
    let n = sys.n();
    let m = sys.m();
    let x0 = sys.x0();
    let jet = sys.drift().jet(x0)?;
    let drift_norm = jet.value.norm();
    if drift_norm > EQUILIBRIUM_TOL {
        return Ok(KalmanReport {
            verdict: KalmanVerdict::Inapplicable,
            rank: None,
            n,
            drift_norm,
        });
    }
    let a = jet.jacobian;
    let mut block = DMatrix::zeros(n, m);
    for (i, f) in sys.fields().iter().enumerate() {
        block.set_column(i, &f.value(x0)?);
    }
    let mut ctrb = DMatrix::zeros(n, n * m);
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = &a * block;
    }
    let rank = linalg::rank(&ctrb, sys.settings.rank_tol);
    let verdict = if rank == n {
        KalmanVerdict::Regular
    } else {
        KalmanVerdict::AbnormalCandidate
    };
    Ok(KalmanReport {
        verdict,
        rank: Some(rank),
        n,
        drift_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ExprField;
    use crate::systems;

    #[test]
    fn double_integrator_is_regular() {
        let rep = kalman_regularity(&systems::double_integrator()).unwrap();
        assert_eq!(rep.verdict, KalmanVerdict::Regular);
        assert_eq!(rep.rank, Some(2));
    }

    #[test]
    fn rank_one_input() {
        let sys = AffineSystem::new(
            "rank-one",
            ExprField::zero(2),
            vec![ExprField::parse(&["1", "0"], 2).unwrap()],
            1.0,
        )
        .unwrap();
        let rep = kalman_regularity(&sys).unwrap();
        assert_eq!(rep.verdict, KalmanVerdict::AbnormalCandidate);
        assert_eq!(rep.rank, Some(1));
    }

    #[test]
    fn working_example_is_inapplicable() {
        let rep = kalman_regularity(&systems::working()).unwrap();
        assert_eq!(rep.verdict, KalmanVerdict::Inapplicable);
        assert_eq!(rep.rank, None);
    }
}
