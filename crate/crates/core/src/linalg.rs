//! Small dense helpers: skew matrices, a one-sided Jacobi SVD for singular
//! values, and matrix error norms.

use nalgebra::{DMatrix, Matrix3, Vector3};

/// Sweeps allowed before the Jacobi iteration gives up. Small matrices
/// converge in well under ten.
const MAX_SWEEPS: usize = 60;

/// A column pair is treated as orthogonal once |a_p . a_q| falls below this
/// fraction of |a_p| |a_q|.
const ORTHO_TOL: f64 = 1e-15;

/// Smallest singular value treated as nonzero by [`condition_number`].
pub const SIGMA_FLOOR: f64 = 1e-300;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew-symmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Singular values in descending order, by one-sided (Hestenes) Jacobi
/// rotations on the columns.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut a = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let (rows, n) = a.shape();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for i in 0..rows {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    sigma.sort_by(|x, y| y.total_cmp(x));
    sigma
}

/// Ratio of singular values, with +inf once the smallest drops below
/// [`SIGMA_FLOOR`].
pub fn condition_from_sigma(sigma: &[f64]) -> f64 {
    match (sigma.first(), sigma.last()) {
        (Some(&max), Some(&min)) => {
            if !(min >= SIGMA_FLOOR) {
                f64::INFINITY
            } else {
                max / min
            }
        }
        _ => 1.0,
    }
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    condition_from_sigma(&singular_values(m))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// max|a - b| / max|b|, falling back to the absolute error when `b` is zero.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let abs = max_abs(&(a - b));
    let scale = max_abs(b);
    if scale == 0.0 {
        abs
    } else {
        abs / scale
    }
}

/// Moore-Penrose pseudo-inverse together with the numerical rank.
pub fn pinv_with_rank(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let pinv = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
    (pinv, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: square roots of the eigenvalues of M^T M.
    fn cond_via_eigen(m: &DMatrix<f64>) -> f64 {
        let eig = (m.transpose() * m).symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        (max / min).sqrt()
    }

    #[test]
    fn identity_has_condition_one() {
        assert_eq!(condition_number(&DMatrix::identity(4, 4)), 1.0);
    }

    #[test]
    fn diagonal_ratio() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0, 0.5]));
        assert_relative_eq!(condition_number(&m), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_and_rank_deficient_are_infinite() {
        assert!(condition_number(&DMatrix::zeros(3, 3)).is_infinite());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
    }

    #[test]
    fn random_matches_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let k = condition_number(&m);
            let k_ref = cond_via_eigen(&m);
            if k_ref < 1e6 {
                assert_relative_eq!(k, k_ref, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn singular_values_match_nalgebra_for_rectangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (r, c) in [(6, 4), (4, 6), (12, 6), (3, 3)] {
            let m = DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0));
            let ours = singular_values(&m);
            let mut theirs: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            assert_eq!(ours.len(), theirs.len());
            for (a, b) in ours.iter().zip(&theirs) {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn skew_and_vee_round_trip() {
        let v = Vector3::new(0.3, -1.2, 2.5);
        let w = Vector3::new(-0.7, 0.1, 0.9);
        assert_relative_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-15);
        assert_eq!(vee(&skew(&v)), v);
    }

    #[test]
    fn pinv_of_tall_matrix() {
        let m = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let (p, rank) = pinv_with_rank(&m);
        assert_eq!(rank, 3);
        assert_relative_eq!(&p * &m, DMatrix::identity(3, 3), epsilon = 1e-12);
    }
}
