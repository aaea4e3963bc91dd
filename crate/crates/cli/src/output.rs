use std::fmt::Write;

use nalgebra::DMatrix;
use pmdex::dhj::{PoseAnalysis, Pipeline};
use pmdex::ManipulatorConfig;
use serde_json::Value;

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

pub fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::Null
    }
}

fn matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} ({}x{}):", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        out.push_str("  ");
        for v in m.row(i).iter() {
            let _ = write!(out, " {v:>12.5e}");
        }
        out.push('\n');
    }
}

pub fn pose_text(cfg: &ManipulatorConfig, pipe: &Pipeline, a: &PoseAnalysis) -> String {
    let r = &a.record;
    let p = &r.pose;
    let u = cfg.unit;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "pose: y = {} {u}, z = {} {u}, theta = {} deg, psi = {} deg",
        p.y,
        p.z,
        p.theta.to_degrees(),
        p.psi.to_degrees()
    );
    let _ = writeln!(out, "dependent: x = {:e} {u}, phi_z = {:e} deg", p.x, p.phi_z.to_degrees());
    let _ = writeln!(out, "plan: {} ({} weights)", pipe.plan, pipe.rule.as_str());
    let q: Vec<String> = a.q().iter().map(|v| format!("{v:.9}")).collect();
    let _ = writeln!(out, "q_a [{u}]: {}", q.join(", "));
    matrix(&mut out, "G^T", &a.g.gt_dyn());
    matrix(&mut out, "J_a", &a.forward.ja());
    matrix(&mut out, "S", &a.selection.s);
    matrix(&mut out, "V_ps", &a.nominal.full);
    matrix(&mut out, "J_dh", &r.jdh);
    let s: Vec<String> = r.singular_values.iter().map(|v| format!("{v:.9e}")).collect();
    let _ = writeln!(out, "singular values of J_dh: {}", s.join(", "));
    let _ = writeln!(out, "cond(J_dh) = {:.9e}", r.k);
    let _ = writeln!(out, "cond(G^T)  = {:.9e}", r.k_conventional);
    out
}
