//! Constraint-embedded inverse Jacobian G^T = [G_a^T; G_c^T].
//!
//! Each row is a line screw written as a wrench `[d, a x d]`, so that its
//! power against the twist `(v, w)` of the platform origin is
//! `d . (v + w x a)`, the velocity of the point `a` along `d`.

use nalgebra::{DMatrix, Matrix6, RowVector6, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ActuatorKind, LimbKind, LimbKinematics, ManipulatorConfig, SINGULAR_LIMB_TOL};
use crate::units::Dim;

/// Recipe for the actuation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationRows {
    /// `[l, a x l] / (l . s1)` on every limb. Agrees with the finite-difference
    /// inverse kinematics.
    LegLine,
    /// `[n, n x a] / (n . s1)` on PUS limbs and `[l, l x a] / (l . s1)` on PRS
    /// limbs, as typeset in the source derivation. Kept as a diagnostic.
    Printed,
}

/// Wrench row of a line with direction `d` through the point `a`.
pub fn line_row(d: &Vector3<f64>, a: &Vector3<f64>) -> RowVector6<f64> {
    let m = a.cross(d);
    RowVector6::new(d.x, d.y, d.z, m.x, m.y, m.z)
}

fn normalized_row(
    limb: usize,
    d: &Vector3<f64>,
    moment: &Vector3<f64>,
    s1: &Vector3<f64>,
) -> Result<RowVector6<f64>> {
    let denom = d.dot(s1);
    if !(denom.abs() > SINGULAR_LIMB_TOL * d.norm()) {
        return Err(Error::SingularLimb { limb, denominator: denom });
    }
    Ok(RowVector6::new(d.x, d.y, d.z, moment.x, moment.y, moment.z) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseJacobian {
    /// Rows 0..f are actuation rows, rows f..6 constraint rows.
    pub gt: Matrix6<f64>,
    pub f: usize,
}

impl InverseJacobian {
    pub fn new(gt: Matrix6<f64>, f: usize) -> Result<Self> {
        if f == 0 || f > 6 {
            return Err(Error::Shape(format!("actuated row count {f} outside 1..=6")));
        }
        Ok(InverseJacobian { gt, f })
    }

    pub fn gt_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(6, 6, self.gt.iter().cloned())
    }

    fn block(&self, r0: usize, nr: usize, c0: usize) -> DMatrix<f64> {
        DMatrix::from_fn(nr, 3, |i, j| self.gt[(r0 + i, c0 + j)])
    }

    /// G_a^T, f x 6.
    pub fn ga_t(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.f, 6, |i, j| self.gt[(i, j)])
    }

    /// G_c^T, (6 - f) x 6.
    pub fn gc_t(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6 - self.f, 6, |i, j| self.gt[(self.f + i, j)])
    }

    pub fn gav_t(&self) -> DMatrix<f64> {
        self.block(0, self.f, 0)
    }

    pub fn gaw_t(&self) -> DMatrix<f64> {
        self.block(0, self.f, 3)
    }

    pub fn gcv_t(&self) -> DMatrix<f64> {
        self.block(self.f, 6 - self.f, 0)
    }

    pub fn gcw_t(&self) -> DMatrix<f64> {
        self.block(self.f, 6 - self.f, 3)
    }
}

pub fn build_inverse_jacobian(limbs: &[LimbKinematics]) -> Result<InverseJacobian> {
    build_inverse_jacobian_with(limbs, ActuationRows::LegLine)
}

pub fn build_inverse_jacobian_with(limbs: &[LimbKinematics], rows: ActuationRows) -> Result<InverseJacobian> {
    let f = limbs.len();
    let prs: Vec<&LimbKinematics> = limbs.iter().filter(|k| k.kind == LimbKind::Prs).collect();
    if f + prs.len() != 6 {
        return Err(Error::Shape(format!(
            "{f} actuation rows and {} constraint rows do not make a 6x6 system",
            prs.len()
        )));
    }
    let mut gt = Matrix6::zeros();
    for (i, k) in limbs.iter().enumerate() {
        let row = match (rows, k.kind) {
            (ActuationRows::LegLine, _) | (ActuationRows::Printed, LimbKind::Prs) => {
                let moment = match rows {
                    ActuationRows::LegLine => k.a.cross(&k.l),
                    ActuationRows::Printed => k.l.cross(&k.a),
                };
                normalized_row(i + 1, &k.l, &moment, &k.s1)?
            }
            (ActuationRows::Printed, LimbKind::Pus) => normalized_row(i + 1, &k.n, &k.n.cross(&k.a), &k.s1)?,
        };
        gt.set_row(i, &row);
    }
    for (c, k) in prs.iter().enumerate() {
        gt.set_row(f + c, &line_row(&k.s2, &k.a));
    }
    InverseJacobian::new(gt, f)
}

/// Physical dimensions of the velocity and angular blocks of G and J_a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowUnits {
    pub g_v: Dim,
    pub g_w: Dim,
    pub ja1: Dim,
    pub ja2: Dim,
}

pub fn actuation_row_units(cfg: &ManipulatorConfig) -> Result<RowUnits> {
    match cfg.actuator {
        ActuatorKind::Linear => Ok(RowUnits { g_v: Dim::ONE, g_w: Dim::LENGTH, ja1: Dim::ONE, ja2: Dim::INV_LENGTH }),
        ActuatorKind::Rotational => {
            Ok(RowUnits { g_v: Dim::INV_LENGTH, g_w: Dim::ONE, ja1: Dim::LENGTH, ja2: Dim::ONE })
        }
        ActuatorKind::Mixed => Err(Error::MixedActuation),
    }
}
