//! Point-velocity map from the shifting property v_i = v + w x a_i.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::linalg::skew;

pub fn point_velocity(v: &Vector3<f64>, omega: &Vector3<f64>, a: &Vector3<f64>) -> Vector3<f64> {
    v + omega.cross(a)
}

/// True when all points lie on one line (or coincide). Tolerance is relative
/// to the spread of the points.
pub fn collinear(points: &[Vector3<f64>]) -> bool {
    let Some(p0) = points.first() else {
        return true;
    };
    let d: Vec<Vector3<f64>> = points.iter().map(|p| p - p0).collect();
    let scale = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    let tol = 1e-12 * scale * scale;
    for i in 0..d.len() {
        for j in (i + 1)..d.len() {
            if d[i].cross(&d[j]).norm() > tol {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointVelocityMap {
    pub points: Vec<Vector3<f64>>,
    /// 3f x 6, row blocks [I, -[a_i]x].
    pub vp: DMatrix<f64>,
}

/// V_p for any list of points, without the noncollinearity check.
pub fn point_velocity_matrix(points: &[Vector3<f64>]) -> DMatrix<f64> {
    let mut vp = DMatrix::zeros(3 * points.len(), 6);
    for (i, a) in points.iter().enumerate() {
        let r = 3 * i;
        vp.view_mut((r, 0), (3, 3)).fill_with_identity();
        vp.view_mut((r, 3), (3, 3)).copy_from(&(-skew(a)));
    }
    vp
}

pub fn build_vp(points: &[Vector3<f64>]) -> Result<PointVelocityMap> {
    if points.len() < 3 || collinear(points) {
        return Err(Error::DegeneratePoints);
    }
    Ok(PointVelocityMap { points: points.to_vec(), vp: point_velocity_matrix(points) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shifting_examples() {
        let z = Vector3::zeros();
        assert_eq!(
            point_velocity(&Vector3::new(1.0, 2.0, 3.0), &z, &Vector3::new(5.0, -1.0, 2.0)),
            Vector3::new(1.0, 2.0, 3.0)
        );
        assert_eq!(point_velocity(&z, &Vector3::z(), &Vector3::x()), Vector3::y());
        let v = point_velocity(&Vector3::y(), &Vector3::new(0.1, 0.0, 0.0), &Vector3::new(0.0, 0.0, 2.0));
        assert!((v - Vector3::new(0.0, 0.8, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_point_block_signs() {
        let a = Vector3::new(0.3, -0.7, 1.1);
        let vp = point_velocity_matrix(&[a]);
        // Row x: v_x + a_z w_y - a_y w_z.
        assert_eq!(vp.row(0).iter().cloned().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, a.z, -a.y]);
        assert_eq!(vp.row(1).iter().cloned().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, -a.z, 0.0, a.x]);
        assert_eq!(vp.row(2).iter().cloned().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, a.y, -a.x, 0.0]);
        let e1 = point_velocity_matrix(&[Vector3::x()]);
        assert_eq!(e1[(1, 5)], 1.0);
        assert_eq!(e1[(2, 4)], -1.0);
    }

    #[test]
    fn heave_moves_every_point_up() {
        let pts: Vec<_> = (0..4)
            .map(|i| {
                let t = std::f64::consts::FRAC_PI_2 * i as f64;
                Vector3::new(200.0 * t.cos(), 200.0 * t.sin(), 0.0)
            })
            .collect();
        let map = build_vp(&pts).unwrap();
        let v = &map.vp * DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        for i in 0..4 {
            assert_eq!(v[3 * i + 2], 1.0);
        }
    }

    #[test]
    fn matrix_matches_stacked_shifting() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..4)
            .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-300.0..300.0)))
            .collect();
        let map = build_vp(&pts).unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let v = Vector3::new(x[0], x[1], x[2]);
            let w = Vector3::new(x[3], x[4], x[5]);
            let stacked = &map.vp * &x;
            for (i, a) in pts.iter().enumerate() {
                let vi = point_velocity(&v, &w, a);
                for c in 0..3 {
                    assert!((stacked[3 * i + c] - vi[c]).abs() < 1e-14 * 300.0);
                }
            }
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let pts = vec![Vector3::zeros(), Vector3::x(), 2.0 * Vector3::x(), -Vector3::x()];
        assert_eq!(build_vp(&pts), Err(Error::DegeneratePoints));
        assert!(collinear(&[Vector3::x()]));
    }
}
