//! Geometry, constrained pose resolution and inverse kinematics for the
//! 4-DoF TyTzRxRy PUS/PRS reference mechanism.
//!
//! Conventions: limb i sits at angle `angle_i` on the base circle (radius
//! `r_b`) and on the platform circle (radius `r_a`); the platform rotation is
//! `R = Rx(theta) Ry(psi) Rz(phi_z)`; the platform origin is `(x, y, z)`.
//! `x` and `phi_z` are the dependent coordinates fixed by the PRS hinges.

use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointmap;
use crate::units::Unit;

pub const DEPENDENT_MAX_ITER: usize = 50;

/// Residual target of the dependent-coordinate solve, relative to `r_b`.
pub const DEPENDENT_TOL: f64 = 1e-12;

/// |l . s1| / |l| below this marks a limb whose leg is perpendicular to its
/// slider.
pub const SINGULAR_LIMB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimbKind {
    #[serde(rename = "PUS")]
    Pus,
    #[serde(rename = "PRS")]
    Prs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorKind {
    Linear,
    Rotational,
    Mixed,
}

/// Counts for the Tsai mobility formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mobility {
    pub lambda: i64,
    pub n: i64,
    pub j: i64,
    pub f_sum: i64,
}

/// F = lambda (n - j - 1) + sum f_i.
pub fn tsai_mobility(m: &Mobility) -> i64 {
    m.lambda * (m.n - m.j - 1) + m.f_sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimbSpec {
    /// Angular position on both circles, radians.
    pub angle: f64,
    pub kind: LimbKind,
    /// Prismatic (actuated) joint direction, unit.
    pub slider_axis: Vector3<f64>,
    /// Revolute axis of a PRS limb, first U axis of a PUS limb; unit.
    pub hinge_axis: Vector3<f64>,
}

/// Admissible orientation range, plus the height band used when sampling
/// poses. Angles in radians, heights in the config unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub theta_max: f64,
    pub psi_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorConfig {
    pub r_a: f64,
    pub r_b: f64,
    pub l: f64,
    pub unit: Unit,
    pub limbs: Vec<LimbSpec>,
    pub actuator: ActuatorKind,
    pub mobility: Mobility,
    pub envelope: Envelope,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    r_a: f64,
    r_b: f64,
    l: f64,
    unit: Unit,
    limbs: Vec<LimbFile>,
    actuator: ActuatorKind,
    mobility: Mobility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    envelope: Option<EnvelopeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimbFile {
    angle_deg: f64,
    kind: LimbKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slider_axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hinge_axis: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeFile {
    theta_deg: f64,
    psi_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_max: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 42;
const DEFAULT_ENVELOPE_DEG: f64 = 50.0;
const DEFAULT_Z_BAND_MM: (f64, f64) = (100.0, 200.0);

fn unit_axis(v: [f64; 3], what: &str) -> Result<Vector3<f64>> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Config(format!("{what} must be a nonzero finite vector")));
    }
    Ok(v / n)
}

impl ManipulatorConfig {
    /// The reference mechanism: r_a = 200 mm, r_b = 450 mm, l = 687 mm,
    /// PUS limbs at 0 and 180 degrees, PRS limbs at 90 and 270 degrees.
    pub fn reference() -> Self {
        let kinds = [LimbKind::Pus, LimbKind::Prs, LimbKind::Pus, LimbKind::Prs];
        let limbs = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| LimbSpec {
                angle: (90.0 * i as f64).to_radians(),
                kind,
                slider_axis: Vector3::z(),
                hinge_axis: Vector3::x(),
            })
            .collect();
        ManipulatorConfig {
            r_a: 200.0,
            r_b: 450.0,
            l: 687.0,
            unit: Unit::Mm,
            limbs,
            actuator: ActuatorKind::Linear,
            mobility: Mobility { lambda: 6, n: 10, j: 12, f_sum: 22 },
            envelope: Envelope {
                theta_max: DEFAULT_ENVELOPE_DEG.to_radians(),
                psi_max: DEFAULT_ENVELOPE_DEG.to_radians(),
                z_min: DEFAULT_Z_BAND_MM.0,
                z_max: DEFAULT_Z_BAND_MM.1,
            },
            seed: DEFAULT_SEED,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let limbs = file
            .limbs
            .iter()
            .enumerate()
            .map(|(i, lf)| {
                Ok(LimbSpec {
                    angle: lf.angle_deg.to_radians(),
                    kind: lf.kind,
                    slider_axis: match lf.slider_axis {
                        Some(v) => unit_axis(v, &format!("limb {} slider_axis", i + 1))?,
                        None => Vector3::z(),
                    },
                    hinge_axis: match lf.hinge_axis {
                        Some(v) => unit_axis(v, &format!("limb {} hinge_axis", i + 1))?,
                        None => Vector3::x(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let band_scale = Unit::Mm.factor_to(file.unit);
        let envelope = match &file.envelope {
            Some(e) => Envelope {
                theta_max: e.theta_deg.to_radians(),
                psi_max: e.psi_deg.to_radians(),
                z_min: e.z_min.unwrap_or(DEFAULT_Z_BAND_MM.0 * band_scale),
                z_max: e.z_max.unwrap_or(DEFAULT_Z_BAND_MM.1 * band_scale),
            },
            None => Envelope {
                theta_max: DEFAULT_ENVELOPE_DEG.to_radians(),
                psi_max: DEFAULT_ENVELOPE_DEG.to_radians(),
                z_min: DEFAULT_Z_BAND_MM.0 * band_scale,
                z_max: DEFAULT_Z_BAND_MM.1 * band_scale,
            },
        };
        let cfg = ManipulatorConfig {
            r_a: file.r_a,
            r_b: file.r_b,
            l: file.l,
            unit: file.unit,
            limbs,
            actuator: file.actuator,
            mobility: file.mobility,
            envelope,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        let file = ConfigFile {
            r_a: self.r_a,
            r_b: self.r_b,
            l: self.l,
            unit: self.unit,
            limbs: self
                .limbs
                .iter()
                .map(|l| LimbFile {
                    angle_deg: l.angle.to_degrees(),
                    kind: l.kind,
                    slider_axis: Some(l.slider_axis.into()),
                    hinge_axis: Some(l.hinge_axis.into()),
                })
                .collect(),
            actuator: self.actuator,
            mobility: self.mobility,
            envelope: Some(EnvelopeFile {
                theta_deg: self.envelope.theta_max.to_degrees(),
                psi_deg: self.envelope.psi_max.to_degrees(),
                z_min: Some(self.envelope.z_min),
                z_max: Some(self.envelope.z_max),
            }),
            seed: Some(self.seed),
        };
        serde_json::to_string_pretty(&file).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r_a", self.r_a), ("r_b", self.r_b), ("l", self.l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.limbs.len() < 3 {
            return Err(Error::Config(format!(
                "at least 3 limbs are required, got {}",
                self.limbs.len()
            )));
        }
        let prs = self.prs_limbs().len();
        if prs != 2 || self.f() + prs != 6 {
            return Err(Error::Config(format!(
                "the TyTzRxRy motion class needs 4 limbs of which exactly 2 are PRS \
                 (got {} limbs, {prs} PRS)",
                self.f()
            )));
        }
        let m = &self.mobility;
        if m.lambda < 0 || m.n < 0 || m.j < 0 || m.f_sum < 0 {
            return Err(Error::Config("mobility counts must be nonnegative".into()));
        }
        let e = &self.envelope;
        if !(e.theta_max > 0.0 && e.psi_max > 0.0 && e.z_min <= e.z_max) {
            return Err(Error::Config("envelope must have positive angles and z_min <= z_max".into()));
        }
        let base: Vec<_> = (0..self.f()).map(|i| self.base_point(i)).collect();
        let plat: Vec<_> = (0..self.f()).map(|i| self.platform_anchor(i)).collect();
        if pointmap::collinear(&base) || pointmap::collinear(&plat) {
            return Err(Error::Config("limb attachment points are collinear".into()));
        }
        Ok(())
    }

    /// Number of limbs, equal to the number of actuated joints.
    pub fn f(&self) -> usize {
        self.limbs.len()
    }

    pub fn prs_limbs(&self) -> Vec<usize> {
        (0..self.f()).filter(|&i| self.limbs[i].kind == LimbKind::Prs).collect()
    }

    /// A_i in the fixed frame.
    pub fn base_point(&self, i: usize) -> Vector3<f64> {
        let t = self.limbs[i].angle;
        Vector3::new(self.r_b * t.cos(), self.r_b * t.sin(), 0.0)
    }

    /// Spherical-joint centre in the platform frame.
    pub fn platform_anchor(&self, i: usize) -> Vector3<f64> {
        let t = self.limbs[i].angle;
        Vector3::new(self.r_a * t.cos(), self.r_a * t.sin(), 0.0)
    }

    /// Copy with every length multiplied by `s`. The unit tag is unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.r_a *= s;
        c.r_b *= s;
        c.l *= s;
        c.envelope.z_min *= s;
        c.envelope.z_max *= s;
        c
    }

    /// Copy expressed in `unit`.
    pub fn in_unit(&self, unit: Unit) -> Self {
        let mut c = self.scaled(self.unit.factor_to(unit));
        c.unit = unit;
        c
    }

    /// Length used to size finite-difference steps and tolerances.
    pub fn length_scale(&self) -> f64 {
        self.r_b
    }

    pub fn check_envelope(&self, theta: f64, psi: f64) -> Result<()> {
        // Grid endpoints computed in degrees land a few ulps outside.
        let slack = 1e-12;
        if theta.abs() > self.envelope.theta_max + slack || psi.abs() > self.envelope.psi_max + slack {
            return Err(Error::Unreachable(format!(
                "orientation (theta {:.3} deg, psi {:.3} deg) is outside the +-{:.1}/+-{:.1} deg envelope",
                theta.to_degrees(),
                psi.to_degrees(),
                self.envelope.theta_max.to_degrees(),
                self.envelope.psi_max.to_degrees()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformPose {
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub psi: f64,
    pub x: f64,
    pub phi_z: f64,
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

pub fn rotation(theta: f64, psi: f64, phi_z: f64) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), theta);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), psi);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), phi_z);
    (rx * ry * rz).into_inner()
}

impl PlatformPose {
    pub fn from_coordinates(y: f64, z: f64, theta: f64, psi: f64, x: f64, phi_z: f64) -> Self {
        PlatformPose {
            y,
            z,
            theta,
            psi,
            x,
            phi_z,
            rotation: rotation(theta, psi, phi_z),
            origin: Vector3::new(x, y, z),
        }
    }

    /// Independent coordinates (y, z, theta, psi).
    pub fn independent(&self) -> [f64; 4] {
        [self.y, self.z, self.theta, self.psi]
    }

    /// Spherical-joint centre of limb `i` in the fixed frame.
    pub fn sphere_center(&self, cfg: &ManipulatorConfig, i: usize) -> Vector3<f64> {
        self.origin + self.rotation * cfg.platform_anchor(i)
    }
}

fn dependent_residual(cfg: &ManipulatorConfig, prs: &[usize], pose: &PlatformPose) -> Vector2<f64> {
    let r = |k: usize| {
        let i = prs[k];
        cfg.limbs[i].hinge_axis.dot(&(pose.sphere_center(cfg, i) - cfg.base_point(i)))
    };
    Vector2::new(r(0), r(1))
}

fn dependent_jacobian(cfg: &ManipulatorConfig, prs: &[usize], pose: &PlatformPose) -> Matrix2<f64> {
    let (s, c) = pose.phi_z.sin_cos();
    let drz = Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0);
    let rxy = rotation(pose.theta, pose.psi, 0.0);
    let mut j = Matrix2::zeros();
    for (k, &i) in prs.iter().enumerate() {
        let h = cfg.limbs[i].hinge_axis;
        j[(k, 0)] = h.x;
        j[(k, 1)] = h.dot(&(rxy * drz * cfg.platform_anchor(i)));
    }
    j
}

/// Damped Newton solve for (x, phi_z) from a given start, without envelope or
/// reachability checks.
pub fn solve_dependent(
    cfg: &ManipulatorConfig,
    y: f64,
    z: f64,
    theta: f64,
    psi: f64,
    start: (f64, f64),
) -> Result<PlatformPose> {
    let prs = cfg.prs_limbs();
    let tight = 1e-3 * DEPENDENT_TOL * cfg.length_scale();
    let loose = DEPENDENT_TOL * cfg.length_scale();

    let mut pose = PlatformPose::from_coordinates(y, z, theta, psi, start.0, start.1);
    let mut r = dependent_residual(cfg, &prs, &pose);
    let mut iterations = 0;
    while iterations < DEPENDENT_MAX_ITER {
        if r.norm() <= tight {
            return Ok(pose);
        }
        let j = dependent_jacobian(cfg, &prs, &pose);
        let Some(delta) = j.lu().solve(&(-r)) else {
            return Err(Error::NoConvergence { iterations, residual: r.norm() });
        };
        let mut lambda = 1.0;
        let (next, r_next) = loop {
            let cand = PlatformPose::from_coordinates(
                y,
                z,
                theta,
                psi,
                pose.x + lambda * delta.x,
                pose.phi_z + lambda * delta.y,
            );
            let rc = dependent_residual(cfg, &prs, &cand);
            if rc.norm() < r.norm() || lambda < 1e-4 {
                break (cand, rc);
            }
            lambda *= 0.5;
        };
        if r_next.norm() >= r.norm() {
            // Stalled at the rounding floor.
            break;
        }
        pose = next;
        r = r_next;
        iterations += 1;
    }
    if r.norm() <= loose && r.norm().is_finite() {
        Ok(pose)
    } else {
        Err(Error::NoConvergence { iterations, residual: r.norm() })
    }
}

/// Resolve the dependent coordinates for the independent task coordinates
/// and confirm that every limb can reach the pose.
pub fn resolve_pose(cfg: &ManipulatorConfig, y: f64, z: f64, theta: f64, psi: f64) -> Result<PlatformPose> {
    cfg.check_envelope(theta, psi)?;
    let pose = solve_dependent(cfg, y, z, theta, psi, (0.0, 0.0))?;
    inverse_kinematics(cfg, &pose)?;
    Ok(pose)
}

/// Residuals of the PRS hinge-plane constraints at a pose.
pub fn constraint_residuals(cfg: &ManipulatorConfig, pose: &PlatformPose) -> Vec<f64> {
    let prs = cfg.prs_limbs();
    dependent_residual(cfg, &prs, pose).iter().cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimbKinematics {
    pub kind: LimbKind,
    /// A_i, base attachment.
    pub base_point: Vector3<f64>,
    /// C_i, U or R joint centre on the slider.
    pub joint_center: Vector3<f64>,
    /// B_i, spherical joint centre.
    pub sphere_center: Vector3<f64>,
    /// Actuated slider displacement.
    pub q: f64,
    /// Platform origin to B_i, fixed-frame components.
    pub a: Vector3<f64>,
    /// Fixed-frame origin to A_i.
    pub b: Vector3<f64>,
    /// C_i to B_i.
    pub l: Vector3<f64>,
    pub s1: Vector3<f64>,
    pub s2: Vector3<f64>,
    pub s3: Vector3<f64>,
    pub n: Vector3<f64>,
}

/// Elbow-down inverse kinematics: C_i = A_i + q_i s1 below B_i with
/// |B_i - C_i| = l.
pub fn inverse_kinematics(cfg: &ManipulatorConfig, pose: &PlatformPose) -> Result<Vec<LimbKinematics>> {
    (0..cfg.f())
        .map(|i| {
            let spec = &cfg.limbs[i];
            let s1 = spec.slider_axis;
            let a_pt = cfg.base_point(i);
            let b_pt = pose.sphere_center(cfg, i);
            let d = b_pt - a_pt;
            let along = s1.dot(&d);
            let perp2 = (d.norm_squared() - along * along).max(0.0);
            let disc = cfg.l * cfg.l - perp2;
            if !(disc >= 0.0) {
                return Err(Error::Unreachable(format!(
                    "limb {}: offset {:.6} exceeds link length {:.6}",
                    i + 1,
                    perp2.sqrt(),
                    cfg.l
                )));
            }
            let q = along - disc.sqrt();
            let c_pt = a_pt + q * s1;
            let l = b_pt - c_pt;
            let s2 = spec.hinge_axis;
            let cross = s2.cross(&l);
            if cross.norm() <= 1e-12 * l.norm() {
                return Err(Error::SingularLimb { limb: i + 1, denominator: 0.0 });
            }
            let s3 = cross.normalize();
            Ok(LimbKinematics {
                kind: spec.kind,
                base_point: a_pt,
                joint_center: c_pt,
                sphere_center: b_pt,
                q,
                a: b_pt - pose.origin,
                b: a_pt,
                l,
                s1,
                s2,
                s3,
                n: s3.cross(&s2),
            })
        })
        .collect()
}

/// Actuated joint values only.
pub fn joint_values(cfg: &ManipulatorConfig, pose: &PlatformPose) -> Result<Vec<f64>> {
    Ok(inverse_kinematics(cfg, pose)?.iter().map(|k| k.q).collect())
}

/// Pose for given independent coordinates with the dependent solve started
/// from a nearby pose. No envelope check.
pub fn pose_near(cfg: &ManipulatorConfig, u: [f64; 4], near: &PlatformPose) -> Result<PlatformPose> {
    solve_dependent(cfg, u[0], u[1], u[2], u[3], (near.x, near.phi_z))
}

/// Forward kinematics by Newton refinement from `guess`: find the pose whose
/// joint values equal `q`. Uses a finite-difference Jacobian of the inverse
/// kinematics, so it shares nothing with the screw-theory rows.
pub fn forward_refine(cfg: &ManipulatorConfig, q: &[f64], guess: &PlatformPose) -> Result<PlatformPose> {
    let f = cfg.f();
    if q.len() != f || f != 4 {
        return Err(Error::Shape(format!("expected {f} joint values, got {}", q.len())));
    }
    let scale = cfg.length_scale();
    let tol = 1e-13 * scale;
    let steps = [1e-7 * scale, 1e-7 * scale, 1e-7, 1e-7];
    let fail = |msg: String| Error::NoForwardSolution(msg);

    let residual = |pose: &PlatformPose| -> Result<nalgebra::Vector4<f64>> {
        let qi = joint_values(cfg, pose)?;
        Ok(nalgebra::Vector4::from_fn(|k, _| qi[k] - q[k]))
    };

    let mut pose = guess.clone();
    let mut r = residual(&pose).map_err(|e| fail(e.to_string()))?;
    for _ in 0..50 {
        if r.amax() <= tol {
            return Ok(pose);
        }
        let u = pose.independent();
        let mut jac = nalgebra::Matrix4::zeros();
        for c in 0..4 {
            let mut up = u;
            let mut um = u;
            up[c] += steps[c];
            um[c] -= steps[c];
            let qp = pose_near(cfg, up, &pose).and_then(|pp| joint_values(cfg, &pp)).map_err(|e| fail(e.to_string()))?;
            let qm = pose_near(cfg, um, &pose).and_then(|pp| joint_values(cfg, &pp)).map_err(|e| fail(e.to_string()))?;
            for k in 0..4 {
                jac[(k, c)] = (qp[k] - qm[k]) / (2.0 * steps[c]);
            }
        }
        let delta = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| fail("singular joint-space Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let mut un = u;
            for c in 0..4 {
                un[c] += lambda * delta[c];
            }
            let cand = pose_near(cfg, un, &pose).and_then(|p| residual(&p).map(|rr| (p, rr)));
            match cand {
                Ok((p, rr)) if rr.amax() < r.amax() => {
                    pose = p;
                    r = rr;
                    break;
                }
                _ if lambda < 1e-6 => {
                    if r.amax() <= 1e3 * tol {
                        return Ok(pose);
                    }
                    return Err(fail(format!("line search stalled at residual {:e}", r.amax())));
                }
                _ => lambda *= 0.5,
            }
        }
    }
    if r.amax() <= 1e3 * tol {
        Ok(pose)
    } else {
        Err(fail(format!("no convergence, residual {:e}", r.amax())))
    }
}
