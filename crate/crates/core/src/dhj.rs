//! Dimensionally homogeneous Jacobian J_dh = V_ps J_a and the dexterity
//! measures built on it.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward_map::{invert_full, ForwardJacobian};
use crate::linalg::{condition_from_sigma, singular_values};
use crate::model::{inverse_kinematics, resolve_pose, ActuatorKind, LimbKinematics, ManipulatorConfig, PlatformPose};
use crate::pointmap::{build_vp, PointVelocityMap};
use crate::screws::{actuation_row_units, build_inverse_jacobian, InverseJacobian};
use crate::selection::{build_selection_matrix, nominal_map, NominalMap, SelectionMatrix, SelectionPlan, SelectionRule};
use crate::sweep::{grid_values, SweepSpec};
use crate::units::{Dim, Unit};

pub use crate::linalg::condition_number;

pub fn assemble_dhj(vps: &DMatrix<f64>, ja: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if vps.ncols() != ja.nrows() {
        return Err(Error::Shape(format!(
            "V_ps is {}x{} but J_a is {}x{}",
            vps.nrows(),
            vps.ncols(),
            ja.nrows(),
            ja.ncols()
        )));
    }
    Ok(vps * ja)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DexterityRecord {
    pub pose: PlatformPose,
    pub jdh: DMatrix<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// cond(J_dh).
    pub k: f64,
    /// cond(G^T).
    pub k_conventional: f64,
    pub unit: Unit,
}

/// Every intermediate of the pipeline at one pose.
#[derive(Debug, Clone)]
pub struct PoseAnalysis {
    pub limbs: Vec<LimbKinematics>,
    pub g: InverseJacobian,
    pub forward: ForwardJacobian,
    pub vp: PointVelocityMap,
    pub selection: SelectionMatrix,
    pub nominal: NominalMap,
    pub record: DexterityRecord,
}

impl PoseAnalysis {
    pub fn q(&self) -> Vec<f64> {
        self.limbs.iter().map(|k| k.q).collect()
    }
}

/// Options shared by pose evaluation, sweeps and validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub plan: SelectionPlan,
    pub rule: SelectionRule,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline { plan: SelectionPlan::primary(), rule: SelectionRule::Projected }
    }
}

pub fn analyze_resolved(cfg: &ManipulatorConfig, pose: &PlatformPose, pipe: &Pipeline) -> Result<PoseAnalysis> {
    if cfg.actuator != ActuatorKind::Linear {
        actuation_row_units(cfg)?;
        return Err(Error::Unsupported("the reference mechanism is driven by prismatic actuators".into()));
    }
    let limbs = inverse_kinematics(cfg, pose)?;
    let g = build_inverse_jacobian(&limbs)?;
    let forward = invert_full(&g)?;
    let points: Vec<Vector3<f64>> = limbs.iter().map(|k| k.a).collect();
    let vp = build_vp(&points)?;
    let selection = build_selection_matrix(&pipe.plan, &points, pipe.rule)?;
    let nominal = nominal_map(&selection, &vp)?;
    let jdh = assemble_dhj(&nominal.full, &forward.ja())?;
    let sigma = singular_values(&jdh);
    let record = DexterityRecord {
        pose: pose.clone(),
        k: condition_from_sigma(&sigma),
        singular_values: sigma,
        jdh,
        k_conventional: forward.cond_gt,
        unit: cfg.unit,
    };
    Ok(PoseAnalysis { limbs, g, forward, vp, selection, nominal, record })
}

pub fn analyze_pose(
    cfg: &ManipulatorConfig,
    y: f64,
    z: f64,
    theta: f64,
    psi: f64,
    pipe: &Pipeline,
) -> Result<PoseAnalysis> {
    let pose = resolve_pose(cfg, y, z, theta, psi)?;
    analyze_resolved(cfg, &pose, pipe)
}

pub fn evaluate_pose(
    cfg: &ManipulatorConfig,
    y: f64,
    z: f64,
    theta: f64,
    psi: f64,
    pipe: &Pipeline,
) -> Result<DexterityRecord> {
    analyze_pose(cfg, y, z, theta, psi, pipe).map(|a| a.record)
}

/// Joint rates recovered from a nominal velocity, J_dh^-1 v_ps.
pub fn joint_rates_from_nominal(jdh: &DMatrix<f64>, vps: &DVector<f64>) -> Option<DVector<f64>> {
    jdh.clone().lu().solve(vps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitCell {
    pub theta_deg: f64,
    pub psi_deg: f64,
    pub status: String,
    pub k_g_base: Option<f64>,
    pub k_g_scaled: Option<f64>,
    pub k_dh_base: Option<f64>,
    pub k_dh_scaled: Option<f64>,
}

impl UnitCell {
    pub fn dh_deviation(&self) -> Option<f64> {
        Some(rel_dev(self.k_dh_base?, self.k_dh_scaled?))
    }

    pub fn g_deviation(&self) -> Option<f64> {
        Some(rel_dev(self.k_g_base?, self.k_g_scaled?))
    }
}

fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitReport {
    pub base_unit: Unit,
    pub scale: f64,
    pub cells: Vec<UnitCell>,
    pub cells_compared: usize,
    /// Cells evaluated in one run but skipped in the other.
    pub status_mismatches: usize,
    pub max_rel_dev_k_dh: f64,
    pub max_rel_dev_k_g: f64,
    /// k_dh unchanged to 1e-9 everywhere and no status mismatch.
    pub k_dh_invariant: bool,
    /// k_G moved by more than 10% somewhere.
    pub k_g_flagged: bool,
}

pub const UNIT_INVARIANCE_TOL: f64 = 1e-9;
pub const UNIT_DISCREPANCY_FLAG: f64 = 0.10;

/// Evaluate the grid of `spec` on `cfg` and on `cfg.scaled(s)`, with the
/// heights scaled alike, and compare the condition numbers cell by cell.
pub fn unit_scaling_experiment(cfg: &ManipulatorConfig, spec: &SweepSpec, s: f64, pipe: &Pipeline) -> Result<UnitReport> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {s}")));
    }
    spec.validate(cfg)?;
    let scaled = cfg.scaled(s);
    let thetas = grid_values(spec.theta_deg, spec.theta_steps);
    let psis = grid_values(spec.psi_deg, spec.psi_steps);
    let cells: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| psis.iter().map(move |&p| (t, p))).collect();

    let cells: Vec<UnitCell> = cells
        .par_iter()
        .map(|&(t, p)| {
            let (th, ps) = (t.to_radians(), p.to_radians());
            let base = evaluate_pose(cfg, spec.y, spec.z, th, ps, pipe);
            let other = evaluate_pose(&scaled, spec.y * s, spec.z * s, th, ps, pipe);
            let status = match (&base, &other) {
                (Ok(_), Ok(_)) => "ok".to_string(),
                (Err(e), Err(o)) if e.reason() == o.reason() => e.reason().to_string(),
                (Err(e), _) => format!("mismatch:{}", e.reason()),
                (_, Err(o)) => format!("mismatch:{}", o.reason()),
            };
            UnitCell {
                theta_deg: t,
                psi_deg: p,
                status,
                k_g_base: base.as_ref().ok().map(|r| r.k_conventional),
                k_g_scaled: other.as_ref().ok().map(|r| r.k_conventional),
                k_dh_base: base.as_ref().ok().map(|r| r.k),
                k_dh_scaled: other.as_ref().ok().map(|r| r.k),
            }
        })
        .collect();

    let compared: Vec<&UnitCell> = cells.iter().filter(|c| c.status == "ok").collect();
    let mismatches = cells.iter().filter(|c| c.status.starts_with("mismatch")).count();
    let max_dh = compared.iter().filter_map(|c| c.dh_deviation()).fold(0.0, f64::max);
    let max_g = compared.iter().filter_map(|c| c.g_deviation()).fold(0.0, f64::max);
    Ok(UnitReport {
        base_unit: cfg.unit,
        scale: s,
        cells_compared: compared.len(),
        status_mismatches: mismatches,
        max_rel_dev_k_dh: max_dh,
        max_rel_dev_k_g: max_g,
        k_dh_invariant: mismatches == 0 && !compared.is_empty() && max_dh < UNIT_INVARIANCE_TOL,
        k_g_flagged: max_g > UNIT_DISCREPANCY_FLAG,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitEntry {
    pub block: String,
    pub unit: Dim,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitTable {
    pub entries: Vec<UnitEntry>,
    pub jdh: Dim,
    pub homogeneous: bool,
}

/// Symbolic units of every block in the chain V_ps = S V_p, J_dh = V_ps J_a.
pub fn dimensional_audit(cfg: &ManipulatorConfig) -> Result<UnitTable> {
    let rows = actuation_row_units(cfg)?;
    let vp_trans = Dim::ONE;
    let vp_skew = Dim::LENGTH;
    let s = Dim::ONE;
    let via_translation = s * vp_trans * rows.ja1;
    let via_rotation = s * vp_skew * rows.ja2;
    let homogeneous = via_translation == via_rotation;
    let entry = |b: &str, u: Dim| UnitEntry { block: b.to_string(), unit: u };
    Ok(UnitTable {
        entries: vec![
            entry("G_av^T", rows.g_v),
            entry("G_aw^T", rows.g_w),
            entry("J_a1", rows.ja1),
            entry("J_a2", rows.ja2),
            entry("V_p translation block", vp_trans),
            entry("V_p skew block", vp_skew),
            entry("S", s),
            entry("J_dh", via_translation),
        ],
        jdh: via_translation,
        homogeneous,
    })
}
