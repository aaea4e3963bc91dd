//! Finite-difference and brute-force oracles for every analytic matrix, and
//! the report that gates `validate`.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dhj::{analyze_resolved, Pipeline};
use crate::error::{Error, Result};
use crate::forward_map::{block_ja, invert_full};
use crate::linalg::{max_abs, pinv_with_rank, rel_err, vee};
use crate::model::{
    forward_refine, inverse_kinematics, joint_values, pose_near, resolve_pose, tsai_mobility, ManipulatorConfig,
    PlatformPose,
};
use crate::pointmap::build_vp;
use crate::screws::{build_inverse_jacobian, build_inverse_jacobian_with, ActuationRows};
use crate::selection::{
    build_selection_matrix, nominal_map, typeset_nominal_map, SelectionPlan, SelectionRule, CONSTRAINED,
};

/// Default relative step for the tangent and IK oracles.
pub const DEFAULT_H: f64 = 1e-6;
/// Default relative step on joint values for the brute-force J_dh.
pub const DEFAULT_H_DHJ: f64 = 1e-6;

/// Step sizes for (y, z, theta, psi): lengths relative to r_b, angles in
/// radians.
pub fn coordinate_steps(cfg: &ManipulatorConfig, h: f64) -> [f64; 4] {
    let l = h * cfg.length_scale();
    [l, l, h, h]
}

fn perturbed(cfg: &ManipulatorConfig, pose: &PlatformPose, c: usize, step: f64) -> Result<PlatformPose> {
    let mut u = pose.independent();
    u[c] += step;
    let p = pose_near(cfg, u, pose).map_err(|e| Error::StepTooLarge(e.to_string()))?;
    inverse_kinematics(cfg, &p).map_err(|e| Error::StepTooLarge(e.to_string()))?;
    Ok(p)
}

/// 6 x 4 basis of feasible twists: central differences of the resolved pose
/// along (y, z, theta, psi). Angular parts are vee(dR/du R^T).
pub fn fd_constraint_tangent(cfg: &ManipulatorConfig, pose: &PlatformPose, h: f64) -> Result<DMatrix<f64>> {
    let steps = coordinate_steps(cfg, h);
    let mut t = DMatrix::zeros(6, 4);
    for c in 0..4 {
        let plus = perturbed(cfg, pose, c, steps[c])?;
        let minus = perturbed(cfg, pose, c, -steps[c])?;
        let inv2h = 0.5 / steps[c];
        let pdot = (plus.origin - minus.origin) * inv2h;
        let rdot = (plus.rotation - minus.rotation) * inv2h;
        let w = vee(&(rdot * pose.rotation.transpose()));
        for k in 0..3 {
            t[(k, c)] = pdot[k];
            t[(3 + k, c)] = w[k];
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdActuation {
    /// dq/du along (y, z, theta, psi), f x 4.
    pub dq_du: DMatrix<f64>,
    /// The tangent basis used for the lift.
    pub tangent: DMatrix<f64>,
    /// f x 6 map that agrees with dq/du on the tangent: dq/du T^+.
    pub lifted: DMatrix<f64>,
}

pub fn fd_actuation_jacobian(cfg: &ManipulatorConfig, pose: &PlatformPose, h: f64) -> Result<FdActuation> {
    let steps = coordinate_steps(cfg, h);
    let f = cfg.f();
    let mut dq = DMatrix::zeros(f, 4);
    for c in 0..4 {
        let qp = joint_values(cfg, &perturbed(cfg, pose, c, steps[c])?)?;
        let qm = joint_values(cfg, &perturbed(cfg, pose, c, -steps[c])?)?;
        for k in 0..f {
            dq[(k, c)] = (qp[k] - qm[k]) / (2.0 * steps[c]);
        }
    }
    let tangent = fd_constraint_tangent(cfg, pose, h)?;
    let (t_pinv, _) = pinv_with_rank(&tangent);
    let lifted = &dq * t_pinv;
    Ok(FdActuation { dq_du: dq, tangent, lifted })
}

/// J_dh by differentiating the selected point combinations with respect to
/// the joint values through forward Newton refinement. `h` is relative to
/// r_b; central differences at h and h/2 are Richardson-extrapolated, which
/// cancels the O(h^2) term that dominates near singular poses.
pub fn brute_force_dhj(cfg: &ManipulatorConfig, pose: &PlatformPose, pipe: &Pipeline, h: f64) -> Result<DMatrix<f64>> {
    let coarse = brute_force_dhj_central(cfg, pose, pipe, h)?;
    let fine = brute_force_dhj_central(cfg, pose, pipe, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Plain central-difference version of [`brute_force_dhj`].
pub fn brute_force_dhj_central(
    cfg: &ManipulatorConfig,
    pose: &PlatformPose,
    pipe: &Pipeline,
    h: f64,
) -> Result<DMatrix<f64>> {
    let f = cfg.f();
    let limbs = inverse_kinematics(cfg, pose)?;
    let q0: Vec<f64> = limbs.iter().map(|k| k.q).collect();
    let points: Vec<Vector3<f64>> = limbs.iter().map(|k| k.a).collect();
    let s = build_selection_matrix(&pipe.plan, &points, pipe.rule)?.s;
    let hq = h * cfg.length_scale();
    let centers = |p: &PlatformPose| DVector::from_fn(3 * f, |r, _| p.sphere_center(cfg, r / 3)[r % 3]);

    let mut jdh = DMatrix::zeros(f, f);
    for k in 0..f {
        let mut qp = q0.clone();
        let mut qm = q0.clone();
        qp[k] += hq;
        qm[k] -= hq;
        let pp = forward_refine(cfg, &qp, pose)?;
        let pm = forward_refine(cfg, &qm, pose)?;
        let dv = (centers(&pp) - centers(&pm)) / (2.0 * hq);
        jdh.set_column(k, &(&s * dv));
    }
    Ok(jdh)
}

/// Seeded random feasible poses: |y| <= 0.05 r_b, z in the envelope band,
/// theta and psi uniform in the envelope. With `max_cond`, poses whose
/// cond(G^T) exceeds it are redrawn.
pub fn sample_poses(cfg: &ManipulatorConfig, n: usize, seed: u64, max_cond: Option<f64>) -> Result<Vec<PlatformPose>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y_max = 0.05 * cfg.length_scale();
    let env = cfg.envelope;
    let mut poses = Vec::with_capacity(n);
    let mut attempts = 0;
    while poses.len() < n && attempts < 50 * n.max(1) {
        attempts += 1;
        let y = rng.gen_range(-y_max..=y_max);
        let z = rng.gen_range(env.z_min..=env.z_max);
        let theta = rng.gen_range(-env.theta_max..=env.theta_max);
        let psi = rng.gen_range(-env.psi_max..=env.psi_max);
        let Ok(pose) = resolve_pose(cfg, y, z, theta, psi) else { continue };
        if let Some(limit) = max_cond {
            let ok = inverse_kinematics(cfg, &pose)
                .and_then(|l| build_inverse_jacobian(&l))
                .and_then(|g| invert_full(&g))
                .map(|fj| fj.cond_gt <= limit)
                .unwrap_or(false);
            if !ok {
                continue;
            }
        }
        poses.push(pose);
    }
    if poses.len() < n {
        return Err(Error::Unreachable(format!(
            "only {} of {n} sampled poses were feasible after {attempts} draws",
            poses.len()
        )));
    }
    Ok(poses)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Which of the two errors is compared with the tolerance.
    pub metric: String,
    pub tolerance: f64,
    pub pass: bool,
    /// Diagnostics are reported but do not affect the exit code.
    pub gating: bool,
    pub poses_tested: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdoptedVariants {
    pub rotation: String,
    pub twist_reference: String,
    pub ik_branch: String,
    pub actuation_rows: ActuationRows,
    pub constraint_rows: String,
    pub u_joint_second_axis: String,
    pub block_formula: String,
    pub selection_rule: SelectionRule,
    pub selection_plan: String,
    pub pair_z_placement: String,
    pub relative_error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub unit: String,
    pub seed: u64,
    pub step_h: f64,
    pub step_h_dhj: f64,
    pub variants: AdoptedVariants,
    pub checks: Vec<CheckResult>,
    pub all_gating_pass: bool,
}

impl OracleReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub poses: usize,
    pub dhj_poses: usize,
    pub seed: u64,
    pub h: f64,
    pub h_dhj: f64,
    /// Poses above this cond(G^T) are excluded from the checks that invert G^T.
    pub max_cond: f64,
    pub pipeline: Pipeline,
}

impl ValidateOptions {
    pub fn for_config(cfg: &ManipulatorConfig) -> Self {
        ValidateOptions {
            poses: 100,
            dhj_poses: 50,
            seed: cfg.seed,
            h: DEFAULT_H,
            h_dhj: DEFAULT_H_DHJ,
            max_cond: 1e6,
            pipeline: Pipeline::default(),
        }
    }
}

/// Max of absolute and relative errors over poses, with NaN once any pose
/// failed to evaluate.
#[derive(Debug, Default)]
struct Acc {
    abs: f64,
    rel: f64,
    n: usize,
    failed: Option<String>,
}

impl Acc {
    fn push(&mut self, r: Result<(f64, f64)>) {
        match r {
            Ok((a, rel)) => {
                self.abs = self.abs.max(a);
                self.rel = self.rel.max(rel);
                self.n += 1;
            }
            Err(e) => {
                if self.failed.is_none() {
                    self.failed = Some(e.to_string());
                }
            }
        }
    }

    fn finish(self, name: &str, metric: &str, tol: f64, gating: bool, note: Option<String>) -> CheckResult {
        let value = if metric == "rel" { self.rel } else { self.abs };
        let pass = self.failed.is_none() && self.n > 0 && value < tol;
        let note = match (self.failed, note) {
            (Some(f), _) => Some(format!("evaluation failed: {f}")),
            (None, n) if self.n == 0 => Some(n.unwrap_or_else(|| "no poses evaluated".into())),
            (None, n) => n,
        };
        CheckResult {
            name: name.into(),
            max_abs_err: self.abs,
            max_rel_err: self.rel,
            metric: metric.into(),
            tolerance: tol,
            pass,
            gating,
            poses_tested: self.n,
            note,
        }
    }
}

fn errs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, f64) {
    (max_abs(&(a - b)), rel_err(a, b))
}

fn collect<F>(poses: &[PlatformPose], f: F) -> Acc
where
    F: Fn(&PlatformPose) -> Result<(f64, f64)> + Sync + Send,
{
    let results: Vec<Result<(f64, f64)>> = poses.par_iter().map(f).collect();
    let mut acc = Acc::default();
    for r in results {
        acc.push(r);
    }
    acc
}

fn g_at(cfg: &ManipulatorConfig, pose: &PlatformPose, rows: ActuationRows) -> Result<crate::screws::InverseJacobian> {
    build_inverse_jacobian_with(&inverse_kinematics(cfg, pose)?, rows)
}

/// Central-difference error of the actuation rows at two step sizes and the
/// observed order log2(E(h) / E(h/2)).
pub fn fd_observed_order(cfg: &ManipulatorConfig, pose: &PlatformPose, h: f64) -> Result<f64> {
    let g = g_at(cfg, pose, ActuationRows::LegLine)?;
    let e = |h: f64| -> Result<f64> {
        let fd = fd_actuation_jacobian(cfg, pose, h)?;
        Ok(rel_err(&fd.dq_du, &(g.ga_t() * fd_constraint_tangent(cfg, pose, 1e-6)?)))
    };
    let (e1, e2) = (e(h)?, e(0.5 * h)?);
    Ok((e1 / e2).log2())
}

/// Run every oracle on seeded random poses.
pub fn validate(cfg: &ManipulatorConfig, opts: &ValidateOptions) -> OracleReport {
    let pipe = &opts.pipeline;
    let mut checks = Vec::new();

    let sampled = sample_poses(cfg, opts.poses, opts.seed, None);
    let regular = sample_poses(cfg, opts.poses, opts.seed.wrapping_add(1), Some(opts.max_cond));
    let reach_note = match (&sampled, &regular) {
        (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
        _ => None,
    };
    let poses = sampled.unwrap_or_default();
    let regular = regular.unwrap_or_default();
    checks.push(CheckResult {
        name: "reachability".into(),
        max_abs_err: (opts.poses - poses.len()) as f64,
        max_rel_err: (opts.poses - poses.len()) as f64 / opts.poses.max(1) as f64,
        metric: "abs".into(),
        tolerance: 0.5,
        pass: reach_note.is_none(),
        gating: true,
        poses_tested: poses.len(),
        note: reach_note,
    });

    let acc = collect(&poses, |p| {
        let g = g_at(cfg, p, ActuationRows::LegLine)?;
        let fd = fd_actuation_jacobian(cfg, p, opts.h)?;
        Ok(errs(&(g.ga_t() * &fd.tangent), &fd.dq_du))
    });
    checks.push(acc.finish(
        "actuation_rows_vs_fd_ik",
        "rel",
        1e-5,
        true,
        Some("G_a^T T against central differences of the inverse kinematics".into()),
    ));

    let acc = collect(&poses, |p| {
        let g = g_at(cfg, p, ActuationRows::LegLine)?;
        let t = fd_constraint_tangent(cfg, p, opts.h)?;
        let r = g.gc_t() * &t;
        Ok((max_abs(&r), max_abs(&r) / max_abs(&g.gc_t()).max(f64::MIN_POSITIVE)))
    });
    checks.push(acc.finish("constraint_rows_annihilate_tangent", "abs", 1e-7, true, None));

    let sigmas: Vec<Result<f64>> = poses
        .par_iter()
        .map(|p| {
            let t = fd_constraint_tangent(cfg, p, opts.h)?;
            Ok(*crate::linalg::singular_values(&t).last().unwrap_or(&0.0))
        })
        .collect();
    let smin = sigmas.iter().filter_map(|s| s.as_ref().ok().copied()).fold(f64::INFINITY, f64::min);
    let rank_fail = sigmas.iter().find_map(|s| s.as_ref().err().map(|e| e.to_string()));
    checks.push(CheckResult {
        name: "tangent_rank".into(),
        max_abs_err: smin,
        max_rel_err: smin,
        metric: "min_sigma".into(),
        tolerance: 1e-6,
        pass: rank_fail.is_none() && !sigmas.is_empty() && smin > 1e-6,
        gating: true,
        poses_tested: sigmas.len(),
        note: Some(rank_fail.unwrap_or_else(|| {
            "smallest singular value of the tangent basis; must exceed the tolerance".into()
        })),
    });

    let acc = collect(&regular, |p| {
        let g = g_at(cfg, p, ActuationRows::LegLine)?;
        let fj = invert_full(&g)?;
        let res = g.gt_dyn() * DMatrix::from_iterator(6, 6, fj.j.iter().cloned()) - DMatrix::identity(6, 6);
        Ok((max_abs(&res), max_abs(&res)))
    });
    checks.push(acc.finish("inverse_residual", "abs", 1e-10, true, None));

    let acc = collect(&regular, |p| {
        let g = g_at(cfg, p, ActuationRows::LegLine)?;
        let direct = invert_full(&g)?.ja();
        Ok(errs(&block_ja(&g)?, &direct))
    });
    checks.push(acc.finish("block_formula_vs_direct", "rel", 1e-9, true, None));

    let acc = collect(&regular, |p| {
        let g = g_at(cfg, p, ActuationRows::LegLine)?;
        let fj = invert_full(&g)?;
        let r = g.gc_t() * fj.ja();
        Ok((max_abs(&r), max_abs(&r)))
    });
    checks.push(acc.finish("forward_map_constraint_compatible", "abs", 1e-10, true, None));

    let dhj_poses = &regular[..opts.dhj_poses.min(regular.len())];
    let acc = collect(dhj_poses, |p| {
        let analytic = analyze_resolved(cfg, p, pipe)?.record.jdh;
        let brute = brute_force_dhj(cfg, p, pipe, opts.h_dhj)?;
        Ok(errs(&analytic, &brute))
    });
    checks.push(acc.finish("dhj_vs_brute_force", "rel", 1e-5, true, None));

    for (name, plan) in [("annihilation_primary", SelectionPlan::primary()), ("annihilation_alternate", SelectionPlan::alternate())] {
        let acc = collect(&poses, |p| {
            let limbs = inverse_kinematics(cfg, p)?;
            let pts: Vec<Vector3<f64>> = limbs.iter().map(|k| k.a).collect();
            let s = build_selection_matrix(&plan, &pts, pipe.rule)?;
            let nm = nominal_map(&s, &build_vp(&pts)?)?;
            let worst = CONSTRAINED.iter().map(|&c| nm.full.column(c).amax()).fold(0.0, f64::max);
            Ok((worst, worst))
        });
        checks.push(acc.finish(name, "abs", 1e-12, true, None));
    }

    let mobility = tsai_mobility(&cfg.mobility);
    let dev = (mobility - cfg.f() as i64).abs() as f64;
    checks.push(CheckResult {
        name: "mobility".into(),
        max_abs_err: dev,
        max_rel_err: dev / cfg.f() as f64,
        metric: "abs".into(),
        tolerance: 0.5,
        pass: dev == 0.0,
        gating: true,
        poses_tested: 0,
        note: Some(format!("Tsai formula gives {mobility} for {} actuated limbs", cfg.f())),
    });

    let orders: Vec<Result<f64>> = regular.iter().take(5).map(|p| fd_observed_order(cfg, p, 1e-2)).collect();
    let min_order = orders.iter().filter_map(|o| o.as_ref().ok().copied()).fold(f64::INFINITY, f64::min);
    let order_fail = orders.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string()));
    checks.push(CheckResult {
        name: "fd_convergence_order".into(),
        max_abs_err: min_order,
        max_rel_err: min_order,
        metric: "min_order".into(),
        tolerance: 1.7,
        pass: order_fail.is_none() && orders.len() > 0 && min_order >= 1.7,
        gating: true,
        poses_tested: orders.len(),
        note: Some(order_fail.unwrap_or_else(|| {
            "observed order log2(E(h)/E(h/2)) of the actuation-row oracle at h = 1e-2; must be at least the tolerance"
                .into()
        })),
    });

    // Diagnostics.
    let plan_eq: Vec<Result<(f64, f64, bool)>> = regular
        .par_iter()
        .map(|p| {
            let a = analyze_resolved(cfg, p, &Pipeline { plan: SelectionPlan::primary(), rule: pipe.rule })?;
            let b = analyze_resolved(cfg, p, &Pipeline { plan: SelectionPlan::alternate(), rule: pipe.rule })?;
            let (ka, kb) = (a.record.k, b.record.k);
            let rank_deficient = !(kb < 1e12);
            Ok(((ka - kb).abs(), (ka - kb).abs() / ka, rank_deficient))
        })
        .collect();
    let mut acc = Acc::default();
    let mut deficient = 0;
    for r in plan_eq {
        match r {
            Ok((a, rel, d)) => {
                deficient += d as usize;
                acc.push(Ok((a, rel)));
            }
            Err(e) => acc.push(Err(e)),
        }
    }
    let n = acc.n;
    checks.push(acc.finish(
        "plan_equivalence",
        "rel",
        1e-6,
        false,
        Some(format!(
            "cond(J_dh) of the primary against the alternate plan; {deficient} of {n} poses have a \
             rank-deficient alternate J_dh because points 2 and 4 both have a_x = 0 in the reference layout"
        )),
    ));

    let acc = collect(&poses, |p| {
        let g = g_at(cfg, p, ActuationRows::Printed)?;
        let fd = fd_actuation_jacobian(cfg, p, opts.h)?;
        Ok(errs(&(g.ga_t() * &fd.tangent), &fd.dq_du))
    });
    checks.push(acc.finish(
        "typeset_actuation_rows_vs_fd_ik",
        "rel",
        1e-5,
        false,
        Some("n-rows on PUS limbs and (l x a) moments as typeset; kept for comparison only".into()),
    ));

    let acc = collect(&poses, |p| {
        let limbs = inverse_kinematics(cfg, p)?;
        let pts: Vec<Vector3<f64>> = limbs.iter().map(|k| k.a).collect();
        let s = build_selection_matrix(&SelectionPlan::primary(), &pts, SelectionRule::Printed)?;
        let nm = nominal_map(&s, &build_vp(&pts)?)?;
        Ok(errs(&typeset_nominal_map(&pts), &nm.restricted))
    });
    checks.push(acc.finish(
        "typeset_nominal_map_vs_selection",
        "rel",
        1e-9,
        false,
        Some("typeset nominal map against S V_p with the sum-to-one weights; the w_x column differs".into()),
    ));

    let all = checks.iter().filter(|c| c.gating).all(|c| c.pass);
    OracleReport {
        unit: cfg.unit.to_string(),
        seed: opts.seed,
        step_h: opts.h,
        step_h_dhj: opts.h_dhj,
        variants: AdoptedVariants {
            rotation: "R = Rx(theta) Ry(psi) Rz(phi_z)".into(),
            twist_reference: "platform origin; a_i = B_i - origin in the fixed frame".into(),
            ik_branch: "elbow-down (C_i below B_i)".into(),
            actuation_rows: ActuationRows::LegLine,
            constraint_rows: "[s2, a x s2] for each PRS limb".into(),
            u_joint_second_axis: "s3 = unit(s2 x l), n = s3 x s2".into(),
            block_formula: "Y = M^-1 [-R P+; N], M = [T - R P+ Q; N Q], X = P+ (I - Q Y)".into(),
            selection_rule: pipe.rule,
            selection_plan: pipe.plan.to_string(),
            pair_z_placement: "unit z weight on the lower-indexed point of each pair".into(),
            relative_error: "max|A - B| / max|B|".into(),
        },
        checks,
        all_gating_pass: all,
    }
}
