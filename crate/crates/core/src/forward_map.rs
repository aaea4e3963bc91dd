//! Constraint-compatible forward map J = (G^T)^-1 and its actuated columns.

use nalgebra::{DMatrix, Matrix6};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, pinv_with_rank};
use crate::screws::InverseJacobian;

/// cond(G^T) above this is reported as a singular configuration.
pub const SINGULAR_COND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardJacobian {
    pub j: Matrix6<f64>,
    pub f: usize,
    /// cond(G^T) measured before inverting.
    pub cond_gt: f64,
}

impl ForwardJacobian {
    /// J_a, 6 x f.
    pub fn ja(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, self.f, |i, j| self.j[(i, j)])
    }

    /// J_c, 6 x (6 - f).
    pub fn jc(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, 6 - self.f, |i, j| self.j[(i, self.f + j)])
    }

    pub fn ja1(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, self.f, |i, j| self.j[(i, j)])
    }

    pub fn ja2(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, self.f, |i, j| self.j[(3 + i, j)])
    }
}

/// Solve G^T J = I column by column.
pub fn invert_full(g: &InverseJacobian) -> Result<ForwardJacobian> {
    let cond = condition_number(&g.gt_dyn());
    if !(cond <= SINGULAR_COND) {
        return Err(Error::SingularConfiguration { cond });
    }
    let j = g
        .gt
        .lu()
        .solve(&Matrix6::identity())
        .ok_or(Error::SingularConfiguration { cond })?;
    Ok(ForwardJacobian { j, f: g.f, cond_gt: cond })
}

/// J_a from the block partition of G^T, without forming the full inverse.
///
/// With P = G_av^T (f x 3), Q = G_aw^T, R = G_cv^T, T = G_cw^T, the columns
/// [X; Y] solve P X + Q Y = I, R X + T Y = 0. Writing P+ for the
/// pseudo-inverse of P and N for a basis of its left null space:
///
///   Y = M^-1 [-R P+; N],  M = [T - R P+ Q; N Q],  X = P+ (I - Q Y).
///
/// For f = 3 this is the usual Schur-complement formula.
pub fn block_ja(g: &InverseJacobian) -> Result<DMatrix<f64>> {
    let f = g.f;
    if f < 3 {
        return Err(Error::BlockSingular(format!("G_av^T is {f}x3 and cannot have full column rank")));
    }
    let p = g.gav_t();
    let q = g.gaw_t();
    let r = g.gcv_t();
    let t = g.gcw_t();

    let (p_pinv, rank) = pinv_with_rank(&p);
    if rank < 3 {
        return Err(Error::BlockSingular(format!("G_av^T has rank {rank} < 3")));
    }

    // Left null space of P: eigenvectors of I - P P+ with eigenvalue ~1.
    let proj = DMatrix::identity(f, f) - &p * &p_pinv;
    let eig = proj.symmetric_eigen();
    let null_cols: Vec<usize> = (0..f).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if null_cols.len() != f - 3 {
        return Err(Error::BlockSingular("left null space of G_av^T has the wrong dimension".into()));
    }
    let n = DMatrix::from_fn(f - 3, f, |i, j| eig.eigenvectors[(j, null_cols[i])]);

    let rp = &r * &p_pinv;
    let mut m = DMatrix::zeros(3, 3);
    m.view_mut((0, 0), (6 - f, 3)).copy_from(&(&t - &rp * &q));
    m.view_mut((6 - f, 0), (f - 3, 3)).copy_from(&(&n * &q));
    let mut rhs = DMatrix::zeros(3, f);
    rhs.view_mut((0, 0), (6 - f, f)).copy_from(&(-&rp));
    rhs.view_mut((6 - f, 0), (f - 3, f)).copy_from(&n);

    let y = m
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|_| condition_number(&m) <= SINGULAR_COND)
        .ok_or_else(|| Error::BlockSingular("inner 3x3 block is singular".into()))?;
    let x = &p_pinv * (DMatrix::identity(f, f) - &q * &y);

    let mut ja = DMatrix::zeros(6, f);
    ja.view_mut((0, 0), (3, f)).copy_from(&x);
    ja.view_mut((3, 0), (3, f)).copy_from(&y);
    Ok(ja)
}
