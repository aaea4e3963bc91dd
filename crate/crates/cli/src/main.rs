use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pmdex::dhj::{analyze_pose, dimensional_audit, unit_scaling_experiment, PoseAnalysis, Pipeline, UnitReport};
use pmdex::model::tsai_mobility;
use pmdex::sweep::{fmt_full, median, render_csv, run_sweep, SweepSpec};
use pmdex::verify::{validate, ValidateOptions};
use pmdex::{Error, ManipulatorConfig, SelectionPlan, SelectionRule, Unit};
use serde_json::{json, Value};

mod output;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "pmdex", version, about = "Dexterity analysis with dimensionally homogeneous Jacobians")]
struct Cli {
    /// Manipulator config (JSON). Defaults to the built-in reference mechanism.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Working length unit; the config is converted on load.
    #[arg(long, global = true)]
    unit: Option<Unit>,

    /// `primary`, `alternate`, or a pair list such as
    /// '[["1y","2z"],["2y","3z"],["3y","4z"],["4y","1z"]]'.
    #[arg(long, global = true, default_value = "primary")]
    plan: String,

    /// Weight normalization of the extended selection matrix.
    #[arg(long, global = true, default_value = "projected")]
    selection: SelectionRule,

    /// Symmetric orientation envelope in degrees, overriding the config.
    #[arg(long, global = true, value_name = "DEG")]
    envelope: Option<f64>,

    /// Seed for randomized pose sets, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one pose and print every intermediate matrix.
    Pose {
        /// Translation along y, mm.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y: f64,
        /// Height, mm.
        #[arg(long, default_value_t = 150.0, allow_negative_numbers = true)]
        z: f64,
        /// Rotation about x, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        /// Rotation about y, degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        psi: f64,
    },
    /// Condition numbers over a (theta, psi) grid, written as CSV.
    Sweep {
        #[arg(long, default_value_t = 150.0, allow_negative_numbers = true)]
        z: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Compare condition numbers before and after a change of length unit.
    Units {
        #[arg(long, default_value_t = 150.0, allow_negative_numbers = true)]
        z: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        y: f64,
        #[arg(long, default_value_t = 51)]
        grid: usize,
        /// Length scale factor; defaults to the mm <-> m conversion.
        #[arg(long)]
        scale: Option<f64>,
        /// Per-cell CSV of both runs.
        #[arg(long, default_value = "units.csv")]
        out: PathBuf,
        /// JSON summary and unit table.
        #[arg(long, default_value = "units_report.json")]
        report: PathBuf,
    },
    /// Run every finite-difference oracle; exit 0 only if all pass.
    Validate {
        #[arg(long, default_value = "validation_report.json")]
        out: PathBuf,
        /// Random poses per check.
        #[arg(long, default_value_t = 100)]
        poses: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    fn from_core(e: Error) -> Self {
        let code = if e.is_infeasible_pose() { EXIT_INFEASIBLE } else { EXIT_CONFIG };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ManipulatorConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
            ManipulatorConfig::from_json_str(&text).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?
        }
        None => ManipulatorConfig::reference(),
    };
    if let Some(unit) = cli.unit {
        cfg = cfg.in_unit(unit);
    }
    if let Some(deg) = cli.envelope {
        if !(deg > 0.0 && deg < 90.0) {
            return Err(Failure::new(EXIT_CONFIG, format!("envelope must lie in (0, 90) degrees, got {deg}")));
        }
        cfg.envelope.theta_max = deg.to_radians();
        cfg.envelope.psi_max = deg.to_radians();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn pipeline(cli: &Cli, cfg: &ManipulatorConfig) -> Result<Pipeline, Failure> {
    let plan = SelectionPlan::parse(&cli.plan, cfg.f()).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    Ok(Pipeline { plan, rule: cli.selection })
}

/// CLI lengths are millimetres; convert to the working unit.
fn from_mm(cfg: &ManipulatorConfig, v: f64) -> f64 {
    v * Unit::Mm.factor_to(cfg.unit)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn run(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let pipe = pipeline(cli, &cfg)?;
    match &cli.command {
        Command::Pose { y, z, theta, psi } => cmd_pose(cli, &cfg, &pipe, *y, *z, *theta, *psi),
        Command::Sweep { z, y, grid, out } => cmd_sweep(cli, &cfg, &pipe, *y, *z, *grid, out),
        Command::Units { z, y, grid, scale, out, report } => {
            cmd_units(cli, &cfg, &pipe, *y, *z, *grid, *scale, out, report)
        }
        Command::Validate { out, poses } => cmd_validate(cli, &cfg, &pipe, out, *poses),
    }
}

fn cmd_pose(cli: &Cli, cfg: &ManipulatorConfig, pipe: &Pipeline, y: f64, z: f64, theta: f64, psi: f64) -> CmdResult {
    let a = analyze_pose(cfg, from_mm(cfg, y), from_mm(cfg, z), theta.to_radians(), psi.to_radians(), pipe)
        .map_err(Failure::from_core)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&pose_json(cfg, pipe, &a)).expect("json"));
    } else {
        print!("{}", output::pose_text(cfg, pipe, &a));
    }
    Ok(())
}

fn pose_json(cfg: &ManipulatorConfig, pipe: &Pipeline, a: &PoseAnalysis) -> Value {
    let r = &a.record;
    json!({
        "unit": cfg.unit.as_str(),
        "plan": pipe.plan.to_string(),
        "selection_rule": pipe.rule.as_str(),
        "pose": {
            "y": r.pose.y, "z": r.pose.z,
            "theta_deg": r.pose.theta.to_degrees(), "psi_deg": r.pose.psi.to_degrees(),
            "x": r.pose.x, "phi_z_deg": r.pose.phi_z.to_degrees(),
        },
        "q": a.q(),
        "G_T": output::rows(&a.g.gt_dyn()),
        "J_a": output::rows(&a.forward.ja()),
        "S": output::rows(&a.selection.s),
        "V_ps": output::rows(&a.nominal.full),
        "J_dh": output::rows(&r.jdh),
        "singular_values": r.singular_values,
        "cond_Jdh": output::finite_or_null(r.k),
        "cond_G": output::finite_or_null(r.k_conventional),
    })
}

fn cmd_sweep(cli: &Cli, cfg: &ManipulatorConfig, pipe: &Pipeline, y: f64, z: f64, grid: usize, out: &Path) -> CmdResult {
    let spec = SweepSpec { y: from_mm(cfg, y), ..SweepSpec::envelope(cfg, grid, from_mm(cfg, z)) };
    let cells = run_sweep(cfg, &spec, pipe).map_err(Failure::from_core)?;
    write_file(out, &render_csv(&cells))?;
    let ok: Vec<_> = cells.iter().filter(|c| c.is_ok()).collect();
    let summary = json!({
        "out": out.display().to_string(),
        "cells": cells.len(),
        "ok": ok.len(),
        "skipped": cells.len() - ok.len(),
        "median_cond_G": median(ok.iter().filter_map(|c| c.cond_g)),
        "median_cond_Jdh": median(ok.iter().filter_map(|c| c.cond_jdh)),
    });
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    } else {
        println!(
            "wrote {} ({} cells, {} ok, {} skipped)",
            out.display(),
            cells.len(),
            ok.len(),
            cells.len() - ok.len()
        );
        println!("median cond(G^T)  = {}", summary["median_cond_G"]);
        println!("median cond(J_dh) = {}", summary["median_cond_Jdh"]);
    }
    Ok(())
}

fn units_csv(r: &UnitReport) -> String {
    let mut s = String::from("theta_deg,psi_deg,cond_G_base,cond_G_scaled,cond_Jdh_base,cond_Jdh_scaled,rel_dev_G,rel_dev_Jdh,status\n");
    let o = |v: Option<f64>| v.map(fmt_full).unwrap_or_default();
    for c in &r.cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_full(c.theta_deg),
            fmt_full(c.psi_deg),
            o(c.k_g_base),
            o(c.k_g_scaled),
            o(c.k_dh_base),
            o(c.k_dh_scaled),
            o(c.g_deviation()),
            o(c.dh_deviation()),
            c.status
        ));
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn cmd_units(
    cli: &Cli,
    cfg: &ManipulatorConfig,
    pipe: &Pipeline,
    y: f64,
    z: f64,
    grid: usize,
    scale: Option<f64>,
    out: &Path,
    report: &Path,
) -> CmdResult {
    let other = if cfg.unit == Unit::Mm { Unit::M } else { Unit::Mm };
    let s = scale.unwrap_or_else(|| cfg.unit.factor_to(other));
    let spec = SweepSpec { y: from_mm(cfg, y), ..SweepSpec::envelope(cfg, grid, from_mm(cfg, z)) };
    let r = unit_scaling_experiment(cfg, &spec, s, pipe).map_err(Failure::from_core)?;
    let audit = dimensional_audit(cfg).map_err(Failure::from_core)?;
    write_file(out, &units_csv(&r))?;
    let summary = json!({
        "base_unit": r.base_unit.as_str(),
        "scale": r.scale,
        "cells": r.cells.len(),
        "cells_compared": r.cells_compared,
        "status_mismatches": r.status_mismatches,
        "max_rel_dev_cond_Jdh": r.max_rel_dev_k_dh,
        "max_rel_dev_cond_G": r.max_rel_dev_k_g,
        "cond_Jdh_invariant": r.k_dh_invariant,
        "cond_G_flagged": r.k_g_flagged,
        "unit_table": audit,
        "mobility": tsai_mobility(&cfg.mobility),
    });
    let text = serde_json::to_string_pretty(&summary).expect("json");
    write_file(report, &text)?;
    if cli.json {
        println!("{text}");
    } else {
        println!("compared {} of {} cells (scale {s})", r.cells_compared, r.cells.len());
        println!("max relative change of cond(J_dh): {:e}", r.max_rel_dev_k_dh);
        println!("max relative change of cond(G^T):  {:e}", r.max_rel_dev_k_g);
        println!("J_dh unit: {} ({})", audit.jdh, if audit.homogeneous { "homogeneous" } else { "mixed" });
    }
    if r.k_dh_invariant {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VALIDATION, "cond(J_dh) changed with the unit"))
    }
}

fn cmd_validate(cli: &Cli, cfg: &ManipulatorConfig, pipe: &Pipeline, out: &Path, poses: usize) -> CmdResult {
    let mut opts = ValidateOptions::for_config(cfg);
    opts.pipeline = pipe.clone();
    opts.poses = poses;
    opts.dhj_poses = opts.dhj_poses.min(poses);
    let report = validate(cfg, &opts);
    let text = report.to_json();
    write_file(out, &text)?;
    if cli.json {
        println!("{text}");
    } else {
        for c in &report.checks {
            let value = if c.metric == "rel" { c.max_rel_err } else { c.max_abs_err };
            println!(
                "{:<5} {:<36} {:>12} {:<9} tol {:e}{}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                format!("{value:.3e}"),
                c.metric,
                c.tolerance,
                if c.gating { "" } else { "  (diagnostic)" }
            );
        }
        println!("report written to {}", out.display());
    }
    if report.all_gating_pass {
        Ok(())
    } else {
        let failed: Vec<&str> =
            report.checks.iter().filter(|c| c.gating && !c.pass).map(|c| c.name.as_str()).collect();
        Err(Failure::new(EXIT_VALIDATION, format!("failed checks: {}", failed.join(", "))))
    }
}
