//! Small dense SVD helpers: numerical rank, left null spaces, least squares.

use nalgebra::{DMatrix, DVector};

/// Singular values in decreasing order. Zero-sized inputs give an empty list.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Left singular structure of a wide-or-tall matrix `a` (rows × cols).
///
/// Returns all `rows` left singular vectors paired with their singular value
/// (zero for the directions beyond `cols`), sorted by increasing singular
/// value. Padding with zero columns keeps U square whatever the shape.
pub fn left_singular_pairs(a: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let rows = a.nrows();
    let padded = if a.ncols() < rows {
        let mut p = DMatrix::zeros(rows, rows);
        p.view_mut((0, 0), (rows, a.ncols())).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..rows)
        .map(|k| (svd.singular_values[k], u.column(k).into_owned()))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs
}

/// Orthonormal basis of `{ w : w^T a = 0 }` at relative tolerance `rel_tol`.
pub fn left_null_space(a: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let pairs = left_singular_pairs(a);
    let smax = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    pairs
        .into_iter()
        .filter(|(s, _)| smax == 0.0 || *s <= rel_tol * smax)
        .map(|(_, v)| v)
        .collect()
}

/// Minimum-norm least-squares solution of `a x = b` with singular values
/// below `rel_tol * sigma_max` discarded.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return None;
    }
    svd.solve(b, rel_tol * smax).ok()
}

/// Angle in radians between two lines through the origin (sign-insensitive).
pub fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let c = (a.dot(b) / (na * nb)).abs().min(1.0);
    // acos is ill-conditioned near 1; use the sine of the angle instead.
    let s = ((a / na) - (b / nb) * c.copysign(a.dot(b))).norm();
    s.atan2(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn rank_detection() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(rank(&a, 1e-8), 1);
        assert_eq!(rank(&DMatrix::zeros(3, 3), 1e-8), 0);
        assert_eq!(rank(&DMatrix::identity(4, 4), 1e-8), 4);
    }

    #[test]
    fn null_space_of_short_matrix() {
        // 3 rows, 1 column: left null space has dimension 2.
        let a = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let ns = left_null_space(&a, 1e-8);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!((v.transpose() * &a).norm() < 1e-14);
        }
    }

    #[test]
    fn angles() {
        let a = dvector![1.0, 0.0];
        assert!(line_angle(&a, &dvector![-2.0, 0.0]) < 1e-16);
        assert!((line_angle(&a, &dvector![0.0, 1.0]) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((line_angle(&a, &dvector![1.0, 1e-9]) - 1e-9).abs() < 1e-20);
    }
}
