//! Rectangular (theta, psi) grids at fixed (y, z).

use rayon::prelude::*;
use serde::Serialize;

use crate::dhj::{evaluate_pose, Pipeline};
use crate::error::{Error, Result};
use crate::model::ManipulatorConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Inclusive range, degrees.
    pub theta_deg: (f64, f64),
    pub theta_steps: usize,
    pub psi_deg: (f64, f64),
    pub psi_steps: usize,
    /// Fixed translation, config units.
    pub y: f64,
    pub z: f64,
}

impl SweepSpec {
    /// n x n grid over +-50 degrees at y = 0.
    pub fn square(n: usize, z: f64) -> Self {
        SweepSpec { theta_deg: (-50.0, 50.0), theta_steps: n, psi_deg: (-50.0, 50.0), psi_steps: n, y: 0.0, z }
    }

    /// n x n grid spanning the config's envelope.
    pub fn envelope(cfg: &ManipulatorConfig, n: usize, z: f64) -> Self {
        let t = cfg.envelope.theta_max.to_degrees();
        let p = cfg.envelope.psi_max.to_degrees();
        SweepSpec { theta_deg: (-t, t), theta_steps: n, psi_deg: (-p, p), psi_steps: n, y: 0.0, z }
    }

    pub fn validate(&self, cfg: &ManipulatorConfig) -> Result<()> {
        if self.theta_steps < 2 || self.psi_steps < 2 {
            return Err(Error::Config("sweep grids need at least 2 steps per axis".into()));
        }
        let within = |(lo, hi): (f64, f64), max: f64| {
            let m = max.to_degrees() + 1e-9;
            lo <= hi && lo >= -m && hi <= m
        };
        if !within(self.theta_deg, cfg.envelope.theta_max) || !within(self.psi_deg, cfg.envelope.psi_max) {
            return Err(Error::Config("sweep range exceeds the configured envelope".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.theta_steps * self.psi_steps
    }
}

/// `steps` evenly spaced values over an inclusive range.
pub fn grid_values(range: (f64, f64), steps: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let last = (steps - 1) as f64;
    (0..steps).map(|i| lo + (hi - lo) * (i as f64) / last).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub theta_deg: f64,
    pub psi_deg: f64,
    pub cond_g: Option<f64>,
    pub cond_jdh: Option<f64>,
    /// "ok" or an error reason code.
    pub status: String,
}

impl SweepCell {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Evaluate every cell, theta outer and psi inner. Cells run in parallel;
/// the output order is the grid order regardless.
pub fn run_sweep(cfg: &ManipulatorConfig, spec: &SweepSpec, pipe: &Pipeline) -> Result<Vec<SweepCell>> {
    spec.validate(cfg)?;
    let thetas = grid_values(spec.theta_deg, spec.theta_steps);
    let psis = grid_values(spec.psi_deg, spec.psi_steps);
    let cells: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| psis.iter().map(move |&p| (t, p))).collect();
    Ok(cells
        .par_iter()
        .map(|&(t, p)| match evaluate_pose(cfg, spec.y, spec.z, t.to_radians(), p.to_radians(), pipe) {
            Ok(r) => SweepCell { theta_deg: t, psi_deg: p, cond_g: Some(r.k_conventional), cond_jdh: Some(r.k), status: "ok".into() },
            Err(e) => SweepCell { theta_deg: t, psi_deg: p, cond_g: None, cond_jdh: None, status: e.reason().into() },
        })
        .collect())
}

pub const CSV_HEADER: &str = "theta_deg,psi_deg,cond_G,cond_Jdh,status";

/// 17 significant digits; round-trips every f64.
pub fn fmt_full(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn render_csv(cells: &[SweepCell]) -> String {
    let mut out = String::with_capacity(64 * (cells.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_full).unwrap_or_default();
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_full(c.theta_deg),
            fmt_full(c.psi_deg),
            opt(c.cond_g),
            opt(c.cond_jdh),
            c.status
        ));
    }
    out
}

/// Median of the finite values, or None when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_hits_endpoints_and_centre() {
        let g = grid_values((-50.0, 50.0), 101);
        assert_eq!(g[0], -50.0);
        assert_eq!(g[50], 0.0);
        assert_eq!(g[100], 50.0);
        assert_eq!(grid_values((-50.0, 50.0), 51)[25], 0.0);
    }

    #[test]
    fn csv_layout() {
        let cfg = ManipulatorConfig::reference();
        let spec = SweepSpec::square(3, 150.0);
        let cells = run_sweep(&cfg, &spec, &Pipeline::default()).unwrap();
        let csv = render_csv(&cells);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("-5.0000000000000000e1,-5.0000000000000000e1,"));
        // theta = 0 row of the reference layout is singular.
        assert!(lines[5].ends_with(",,,singular"), "{}", lines[5]);
        assert!(lines[9].ends_with(",ok"));
    }

    #[test]
    fn spec_validation() {
        let cfg = ManipulatorConfig::reference();
        assert!(SweepSpec::square(1, 150.0).validate(&cfg).is_err());
        let mut s = SweepSpec::square(5, 150.0);
        s.theta_deg = (-60.0, 60.0);
        assert!(s.validate(&cfg).is_err());
    }

    #[test]
    fn median_ignores_non_finite() {
        assert_eq!(median([3.0, f64::INFINITY, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([1.0, 4.0]), Some(2.5));
        assert_eq!(median(Vec::<f64>::new()), None);
    }
}
