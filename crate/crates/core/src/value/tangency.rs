//! Angles between level-set chords at a point and a hyperplane.

use nalgebra::DVector;
use serde::Serialize;

use super::LevelSetCloud;

/// Window radii around the contact point, halving from 0.2.
pub const TANGENCY_WINDOWS: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

/// Fewest points accepted for the exponent regression.
const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowStat {
    pub radius: f64,
    pub count: usize,
    /// Largest chord-to-hyperplane angle in degrees; `None` for an empty window.
    pub max_angle_deg: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub point: DVector<f64>,
    #[serde(serialize_with = "crate::serde_vec::vector")]
    pub normal: DVector<f64>,
    pub windows: Vec<WindowStat>,
    /// Max angles are non-increasing across the non-empty windows.
    pub monotone: bool,
    pub smallest_nonempty: Option<f64>,
    /// Max angle in the smallest non-empty window.
    pub final_angle_deg: Option<f64>,
    /// Slope of `log |<H, v>|` against `log |v_parallel|`.
    pub slope: Option<f64>,
    pub slope_window: Option<f64>,
    pub slope_points: usize,
}

/// Fit over the sphere points of `cloud`.
pub fn tangency_fit(
    cloud: &LevelSetCloud,
    a: &DVector<f64>,
    normal: &DVector<f64>,
) -> TangencyReport {
    let pts: Vec<DVector<f64>> = cloud.sphere_points().map(|p| p.endpoint.clone()).collect();
    tangency_fit_points(&pts, a, normal)
}

pub fn tangency_fit_points(
    points: &[DVector<f64>],
    a: &DVector<f64>,
    normal: &DVector<f64>,
) -> TangencyReport {
    let h = normal.normalize();
    // (distance, normal component, in-plane distance)
    let chords: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.len() == a.len())
        .map(|p| {
            let v = p - a;
            let along = h.dot(&v);
            let inplane = (&v - &h * along).norm();
            (v.norm(), along, inplane)
        })
        .filter(|c| c.0 > 0.0)
        .collect();

    let windows: Vec<WindowStat> = TANGENCY_WINDOWS
        .iter()
        .map(|&radius| {
            let inside: Vec<_> = chords.iter().filter(|c| c.0 < radius).collect();
            let max_angle_deg = inside
                .iter()
                .map(|c| (c.1.abs() / c.0).min(1.0).asin().to_degrees())
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            WindowStat {
                radius,
                count: inside.len(),
                max_angle_deg,
            }
        })
        .collect();
    let filled: Vec<&WindowStat> = windows.iter().filter(|w| w.count > 0).collect();
    let monotone = filled
        .windows(2)
        .all(|w| w[1].max_angle_deg <= w[0].max_angle_deg);
    let last = filled.last();

    let mut slope = None;
    let mut slope_window = None;
    let mut slope_points = 0;
    for w in windows.iter().rev() {
        let sample: Vec<(f64, f64)> = chords
            .iter()
            .filter(|c| c.0 < w.radius && c.1 != 0.0 && c.2 > 0.0)
            .map(|c| (c.2, c.1.abs()))
            .collect();
        if sample.len() >= MIN_FIT_POINTS {
            slope = loglog_slope(&sample);
            slope_window = Some(w.radius);
            slope_points = sample.len();
            break;
        }
    }
    TangencyReport {
        point: a.clone(),
        normal: normal.clone(),
        monotone,
        smallest_nonempty: last.map(|w| w.radius),
        final_angle_deg: last.and_then(|w| w.max_angle_deg),
        windows,
        slope,
        slope_window,
        slope_points,
    }
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn points_in_the_hyperplane_have_zero_angle() {
        let pts: Vec<_> = (1..20).map(|i| dvector![1.0, 0.01 * i as f64]).collect();
        let rep = tangency_fit_points(&pts, &dvector![1.0, 0.0], &dvector![1.0, 0.0]);
        for w in &rep.windows {
            assert_eq!(w.max_angle_deg, Some(0.0));
        }
        assert!(rep.slope.is_none());
    }

    #[test]
    fn quartic_contact_slope() {
        let pts: Vec<_> = (1..40)
            .flat_map(|i| {
                let y = 0.005 * i as f64;
                [dvector![y.powi(4) / 4.0, y], dvector![y.powi(4) / 4.0, -y]]
            })
            .collect();
        let rep = tangency_fit_points(&pts, &dvector![0.0, 0.0], &dvector![1.0, 0.0]);
        assert!((rep.slope.unwrap() - 4.0).abs() < 1e-9);
        assert!(rep.monotone);
        assert_eq!(rep.smallest_nonempty, Some(0.0125));
    }

    #[test]
    fn slope_of_power_law() {
        let pairs: Vec<_> = (1..10)
            .map(|i| (i as f64, 3.0 * (i as f64).powf(2.5)))
            .collect();
        assert!((loglog_slope(&pairs).unwrap() - 2.5).abs() < 1e-12);
    }
}
