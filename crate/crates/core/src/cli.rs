//! Command-line front end. Exit codes: 0 feasible / success, 1 error,
//! 2 infeasible.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Serialize;

use crate::config::MissionConfig;
use crate::constraints::{check_plan, FeasibilityReport};
use crate::cw::{self, sample_times, RelativeState};
use crate::design::{self, contour_grid, r2_feasible_region, DesignResult, Quantity, MAX_CLOSURE_DEFECT_M};
use crate::error::{Error, Result};
use crate::plan::{fly_plan, verify_plan, ImpulsePlan, PlanDocument};
use crate::uncertainty::{are_residual, are_scale, steady_state, trace_history};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;

const COLUMNS: &str = "\
Output files (comma-separated, header row):
  design      design_result.json, impulses.json,
              trajectory.csv: t_s,segment,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps
              (segment 0 is the coast before the first impulse)
  covariance  covariance.csv: t_s,trace_Pr_m2,trace_Pv_m2ps2[,trace_Pr_norm,trace_Pv_norm]
              steady_state.json
  contours    t1-dt12: contour_effort.csv, contour_max_impulse.csv, contour_corridor.csv,
              each t1_s,dt12_s,value,flag (flag: ok|singular|koe|ae)
              r2: r2_region.csv: x_m,y_m,effort_mps,max_impulse_mps,corridor_ok,feasible
  check       check_report.json (also printed)

Exit codes: 0 feasible, 1 error, 2 infeasible.";

#[derive(Debug, Parser)]
#[command(name = "rendezvous", version, about = "Covariance-driven impulsive rendezvous design", after_help = COLUMNS)]
pub struct Cli {
    /// Mission configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's [output] directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid evaluation
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Plane {
    #[value(name = "t1-dt12")]
    T1Dt12,
    R2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search impulse times (and the mid waypoint for three impulses)
    Design {
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        impulses: u8,
    },
    /// Covariance trace history and steady state
    Covariance {
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        step: f64,
        /// Add columns normalized by the steady-state traces
        #[arg(long)]
        normalized: bool,
    },
    /// Grids behind the contour plots
    Contours {
        #[arg(long, value_enum)]
        plane: Plane,
        /// START:END:STEP in seconds
        #[arg(long, allow_hyphen_values = true)]
        t1: Option<String>,
        /// START:END:STEP in seconds
        #[arg(long, allow_hyphen_values = true)]
        dt12: Option<String>,
        /// T1,T2,T3 in seconds
        #[arg(long, allow_hyphen_values = true)]
        times: Option<String>,
        /// START:END:STEP in metres
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// START:END:STEP in metres
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
    },
    /// Re-fly a plan and check it against the configured constraints
    Check { plan: PathBuf },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: &Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::Invalid("--config is required".into()))?;
    let cfg = MissionConfig::load(path)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;

    match &cli.command {
        Command::Design { impulses } => cmd_design(&cfg, &out, *impulses),
        Command::Covariance { t_end, step, normalized } => cmd_covariance(&cfg, &out, *t_end, *step, *normalized),
        Command::Contours { plane, t1, dt12, times, x, y } => match plane {
            Plane::T1Dt12 => cmd_contours_t1(&cfg, &out, required(t1, "--t1")?, required(dt12, "--dt12")?),
            Plane::R2 => cmd_contours_r2(&cfg, &out, required(times, "--times")?, required(x, "--x")?, required(y, "--y")?),
        },
        Command::Check { plan } => cmd_check(&cfg, &out, plan),
    }
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
    v.as_deref().ok_or_else(|| Error::Invalid(format!("{flag} is required for this plane")))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("{}: {e}", path.display()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// `START:END:STEP`, both ends included.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invalid(format!("range `{text}` is not START:END:STEP")))?;
    match parts[..] {
        [a, b, step] if step > 0.0 && b >= a && a.is_finite() && b.is_finite() => Ok(sample_times(a, b, step)),
        _ => Err(Error::Invalid(format!("range `{text}` is empty or malformed"))),
    }
}

/// Shortest round-trip decimal; exponent form for very small or large values.
fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ImpulseRecord {
    index: usize,
    t_s: f64,
    dv_mps: [f64; 3],
    magnitude_mps: f64,
}

fn trajectory_rows(cfg: &MissionConfig, plan: &ImpulsePlan<f64>) -> Result<Vec<Vec<String>>> {
    let ctx = cfg.orbit()?;
    let initial = cfg.initial_state();
    let nodes = fly_plan(&ctx, plan, &initial);
    let mut segments = vec![(0usize, initial, nodes[0].t)];
    for (i, w) in nodes.windows(2).enumerate() {
        segments.push((i + 1, RelativeState::new(w[0].t, w[0].achieved, w[0].v_after), w[1].t));
    }
    let mut rows = Vec::new();
    for (seg, start, end) in segments {
        for t in sample_times(start.t, end, 1.0) {
            let s = cw::propagate(&ctx, &start, &Vector3::zeros(), t - start.t);
            rows.push(vec![num(t), seg.to_string(), num(s.r.x), num(s.r.y), num(s.r.z), num(s.v.x), num(s.v.y), num(s.v.z)]);
        }
    }
    Ok(rows)
}

fn cmd_design(cfg: &MissionConfig, out: &Path, impulses: u8) -> Result<u8> {
    let problem = cfg.problem()?;
    let result: DesignResult = if impulses == 2 { design::design_two_impulse(&problem)? } else { design::design_three_impulse(&problem)? };
    write_json(&out.join("design_result.json"), &result.document())?;
    let Some(plan) = &result.plan else {
        println!("infeasible ({} candidates evaluated)", result.diagnostics.evaluated);
        return Ok(EXIT_INFEASIBLE);
    };
    let records: Vec<ImpulseRecord> = result
        .impulse_sequence()
        .iter()
        .zip(&result.times)
        .enumerate()
        .map(|(index, (dv, &t_s))| ImpulseRecord { index, t_s, dv_mps: [dv.x, dv.y, dv.z], magnitude_mps: dv.norm() })
        .collect();
    write_json(&out.join("impulses.json"), &records)?;
    write_csv(
        &out.join("trajectory.csv"),
        &["t_s", "segment", "x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps"],
        trajectory_rows(cfg, plan)?,
    )?;
    println!(
        "feasible: times [{}] s, J = {:.4} m/s, max impulse = {:.4} m/s",
        result.times.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>().join(", "),
        plan.total_effort,
        plan.max_impulse
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SteadyStateDocument {
    trace_pr_m2: f64,
    trace_pv_m2ps2: f64,
    are_residual_norm: f64,
    are_scale: f64,
}

fn cmd_covariance(cfg: &MissionConfig, out: &Path, t_end: f64, step: f64, normalized: bool) -> Result<u8> {
    let ctx = cfg.orbit()?;
    let model = cfg.uncertainty(&ctx)?;
    let ss = steady_state(&model)?;
    write_json(
        &out.join("steady_state.json"),
        &SteadyStateDocument {
            trace_pr_m2: ss.trace_r(),
            trace_pv_m2ps2: ss.trace_v(),
            are_residual_norm: are_residual(&model, &ss.p).norm(),
            are_scale: are_scale(&model, &ss.p),
        },
    )?;
    let norm = normalized.then(|| (ss.trace_r(), ss.trace_v()));
    let history = trace_history(&model, t_end, step, norm)?;
    let mut header = vec!["t_s", "trace_Pr_m2", "trace_Pv_m2ps2"];
    if normalized {
        header.extend(["trace_Pr_norm", "trace_Pv_norm"]);
    }
    let rows = history.iter().map(|s| {
        let mut row = vec![num(s.t), num(s.trace_r), num(s.trace_v)];
        if normalized {
            row.extend([num(s.trace_r_norm), num(s.trace_v_norm)]);
        }
        row
    });
    write_csv(&out.join("covariance.csv"), &header, rows)?;
    println!("steady state: trace Pr = {:e} m^2, trace Pv = {:e} m^2/s^2", ss.trace_r(), ss.trace_v());
    Ok(EXIT_OK)
}

fn cmd_contours_t1(cfg: &MissionConfig, out: &Path, t1: &str, dt12: &str) -> Result<u8> {
    let problem = cfg.problem()?;
    let (t1s, dts) = (parse_range(t1)?, parse_range(dt12)?);
    for (quantity, file) in [
        (Quantity::Effort, "contour_effort.csv"),
        (Quantity::MaxImpulse, "contour_max_impulse.csv"),
        (Quantity::CorridorFlags, "contour_corridor.csv"),
    ] {
        let g = contour_grid(&problem, &t1s, &dts, quantity)?;
        let rows = (0..t1s.len()).flat_map(|i| (0..dts.len()).map(move |j| (i, j))).map(|(i, j)| {
            let (v, flag) = g.at(i, j);
            vec![num(t1s[i]), num(dts[j]), num(v), flag.label().to_string()]
        });
        write_csv(&out.join(file), &["t1_s", "dt12_s", "value", "flag"], rows.collect::<Vec<_>>())?;
    }
    Ok(EXIT_OK)
}

fn cmd_contours_r2(cfg: &MissionConfig, out: &Path, times: &str, x: &str, y: &str) -> Result<u8> {
    let problem = cfg.problem()?;
    let t: Vec<f64> = times
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invalid(format!("--times `{times}` is not T1,T2,T3")))?;
    let [t1, t2, t3] = t[..] else {
        return Err(Error::Invalid(format!("--times `{times}` is not T1,T2,T3")));
    };
    let points = r2_feasible_region(&problem, [t1, t2, t3], &parse_range(x)?, &parse_range(y)?)?;
    let feasible = points.iter().filter(|p| p.feasible).count();
    let rows = points.iter().map(|p| {
        vec![num(p.x_m), num(p.y_m), num(p.effort_mps), num(p.max_impulse_mps), p.corridor_ok.to_string(), p.feasible.to_string()]
    });
    write_csv(&out.join("r2_region.csv"), &["x_m", "y_m", "effort_mps", "max_impulse_mps", "corridor_ok", "feasible"], rows.collect::<Vec<_>>())?;
    println!("{feasible} of {} points feasible", points.len());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CheckDocument {
    closure_defect_m: f64,
    closure_ok: bool,
    report: FeasibilityReport,
}

/// Accepts a bare plan or a design result carrying one under `plan`.
fn read_plan(path: &Path) -> Result<ImpulsePlan<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let inner = match value.get("plan") {
        Some(p) if value.get("times_s").is_some() && value.get("feasible").is_some() => p.clone(),
        _ => value,
    };
    let doc: PlanDocument = serde_json::from_value(inner).map_err(|e| io_err(path, e))?;
    doc.to_plan()
}

fn cmd_check(cfg: &MissionConfig, out: &Path, plan_path: &Path) -> Result<u8> {
    let plan = read_plan(plan_path)?;
    let ctx = cfg.orbit()?;
    let mc = cfg.mission_constraints()?;
    let initial = cfg.initial_state();
    let defect = verify_plan(&ctx, &plan, &initial);
    let report = check_plan(&ctx, &plan, &initial, &mc, cfg.search.sample_step_s);
    let closure_ok = defect < MAX_CLOSURE_DEFECT_M;
    let ok = closure_ok && report.overall;
    let doc = CheckDocument { closure_defect_m: defect, closure_ok, report };
    write_json(&out.join("check_report.json"), &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Invalid(e.to_string()))?);
    Ok(if ok { EXIT_OK } else { EXIT_INFEASIBLE })
}
