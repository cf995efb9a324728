//! Batch command line: subcommands wire a run configuration to the solvers
//! and write CSV, JSON and SVG reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver non-convergence
//! (or a partial report, or a failed check), 3 I/O error.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cell::{effective_matrix, solve_cell_longitudinal, solve_cell_transverse, EffectiveMatrix};
use crate::control::{m_sweep, ConcentrationReport};
use crate::error::{Error, Result};
use crate::fields::{FaceField, Forcing};
use crate::gammaconv::{run_sweep, SweepReport, SweepSetup};
use crate::grid::{build_domain_grid, DomainSpec, Lateral, LayerProfile, MacGrid, Profile};
use crate::stokes::{FlowModel, SolveStats};
use crate::thinlayer::{restrict_to_omega, solve_thin_layer, BoundsEntry, Resolution, ThinLayerProblem};
use crate::walllaw::{g0_energy, solve_limit, tangential_traction, WallLawSpec};

pub use config::{RunConfig, Settings, WallLawChoice};
use report::{svg_plot, write_csv, write_json, write_svg, Cell, Series};

pub const SWEEP_HEADER: [&str; 8] = [
    "eps",
    "phi_eps",
    "g_eps",
    "g0",
    "l2_err_u",
    "l2_err_p",
    "cg_iters",
    "picard_iters",
];

pub const CONTROL_HEADER: [&str; 7] = [
    "m",
    "F_value",
    "work_identity_residual",
    "mass_residual",
    "band_fraction_1",
    "int_abs_u1_over_m",
    "M_1",
];

#[derive(Debug, Parser)]
#[command(name = "navier-wall", version, about = "Effective Navier wall laws for viscous flow over thin layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cell problems and the effective slip matrix.
    Cell(Overrides),
    /// Limit problem with a Navier wall law on the bottom edge.
    Limit(Overrides),
    /// Full thin-layer problem for each eps in the list.
    Thinlayer(Overrides),
    /// Convergence sweep over eps against the limit problem.
    Sweep(Overrides),
    /// Optimal wall coefficients over a decreasing list of masses.
    Control(Overrides),
    /// Navier-slip Poiseuille flow against its closed form.
    PoiseuilleCheck(Overrides),
}

/// Command-line values; each one overrides the configuration file.
#[derive(Debug, Args)]
struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $WALL_LAW_OUTPUT_DIR, else the current directory).
    #[arg(long)]
    out: Option<String>,
    /// Worker threads for sweep members.
    #[arg(long)]
    jobs: Option<String>,
    /// Profile: `flat:H`, `bump:A`, `tent:A`, `samples:a,b,..` or an expression in x.
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Comma-separated, strictly decreasing.
    #[arg(long)]
    eps: Option<String>,
    /// Comma-separated, strictly decreasing.
    #[arg(long)]
    m: Option<String>,
    /// `over_h`, `no_slip`, `free_slip`, `constant:MU` or `cell`.
    #[arg(long)]
    walllaw: Option<String>,
    /// `stokes` or `navier_stokes`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    f1: Option<String>,
    #[arg(long)]
    f2: Option<String>,
    /// Comma-separated subset of `csv,json,svg`.
    #[arg(long)]
    formats: Option<String>,
    /// Any other configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn settings(&self) -> Result<Settings> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("out", &self.out),
            ("jobs", &self.jobs),
            ("h", &self.h),
            ("nx", &self.nx),
            ("ny", &self.ny),
            ("nu", &self.nu),
            ("eps", &self.eps),
            ("m", &self.m),
            ("walllaw", &self.walllaw),
            ("model", &self.model),
            ("f1", &self.f1),
            ("f2", &self.f2),
            ("formats", &self.formats),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        Settings::from_config(&cfg)
    }
}

/// Maps an error to its process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let (o, run): (&Overrides, fn(&Settings, &Path) -> Result<i32>) = match &cmd {
        Command::Cell(o) => (o, cmd_cell),
        Command::Limit(o) => (o, cmd_limit),
        Command::Thinlayer(o) => (o, cmd_thinlayer),
        Command::Sweep(o) => (o, cmd_sweep),
        Command::Control(o) => (o, cmd_control),
        Command::PoiseuilleCheck(o) => (o, cmd_poiseuille),
    };
    let s = o.settings()?;
    let dir = s.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    run(&s, &dir)
}

fn domain_grid(s: &Settings) -> Result<MacGrid> {
    build_domain_grid(&DomainSpec::new(s.lx, s.lateral)?, s.nx, s.ny, s.grading)
}

fn forcing(s: &Settings) -> Result<Forcing> {
    Forcing::parse(&s.f1, &s.f2)
}

fn cell_coefficient(s: &Settings) -> Result<f64> {
    Ok(solve_cell_longitudinal(&s.cell_profile()?, s.nx, s.ny, &s.solver)?.c)
}

/// Wall law of the limit problem named by the settings.
pub fn wall_law(s: &Settings) -> Result<WallLawSpec> {
    Ok(match s.walllaw {
        WallLawChoice::OverH => WallLawSpec::over_h(s.nu, s.profile()?),
        WallLawChoice::NoSlip => WallLawSpec::no_slip(),
        WallLawChoice::FreeSlip => WallLawSpec::free_slip(),
        WallLawChoice::Constant(mu) => WallLawSpec::constant(mu),
        WallLawChoice::Cell => WallLawSpec::constant(s.nu * cell_coefficient(s)?),
    })
}

fn csv_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[derive(Serialize)]
struct CellReport<'a> {
    profile: &'a str,
    nu: f64,
    nx: usize,
    ny: usize,
    matrix: EffectiveMatrix,
    longitudinal: SolveStats,
}

fn cmd_cell(s: &Settings, dir: &Path) -> Result<i32> {
    let h = s.cell_profile()?;
    let long = solve_cell_longitudinal(&h, s.nx, s.ny, &s.solver)?;
    let trans = solve_cell_transverse(&h, s.nx, s.ny)?;
    let k = effective_matrix(&long, &trans, s.nu)?;
    println!("c1 = {:.12}", k.c1);
    println!("c2 = {:.12}", k.c2);
    println!("K = [[{:.12}, {:.12e}], [{:.12e}, {:.12}]]", k.k[0][0], k.k[0][1], k.k[1][0], k.k[1][1]);
    if s.formats.csv {
        write_csv(
            &csv_path(dir, "cell.csv"),
            &["nu", "c1", "c2", "k11", "k12", "k21", "k22"],
            &[vec![
                Cell::Num(s.nu),
                Cell::Num(k.c1),
                Cell::Num(k.c2),
                Cell::Num(k.k[0][0]),
                Cell::Num(k.k[0][1]),
                Cell::Num(k.k[1][0]),
                Cell::Num(k.k[1][1]),
            ]],
        )?;
    }
    if s.formats.json {
        write_json(
            &dir.join("cell.json"),
            &CellReport {
                profile: h.name(),
                nu: s.nu,
                nx: s.nx,
                ny: s.ny,
                matrix: k,
                longitudinal: long.stats,
            },
        )?;
    }
    if s.formats.svg {
        let g = &trans.grid;
        let mid = g.nx() / 2;
        let pts: Vec<(f64, f64)> = (0..g.ny())
            .filter(|&j| g.is_fluid(mid, j))
            .map(|j| (g.yc(j), trans.w3[j * g.nx() + mid]))
            .collect();
        let svg = svg_plot(
            "transverse cell solution at the cell centre",
            "y",
            "w",
            &[Series {
                name: h.name().to_string(),
                points: pts,
            }],
            false,
        );
        write_svg(&dir.join("cell.svg"), &svg)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct LimitReport {
    g0: f64,
    x: Vec<f64>,
    trace: Vec<f64>,
    traction: Vec<f64>,
    stats: SolveStats,
}

fn cmd_limit(s: &Settings, dir: &Path) -> Result<i32> {
    let grid = domain_grid(s)?;
    let spec = wall_law(s)?;
    let f = forcing(s)?.sample(&grid)?;
    let (u, stats) = solve_limit(&f, s.nu, &spec, s.model, &grid, &s.solver)?;
    let g0 = g0_energy(&u, s.nu, &spec, &grid)?;
    let t = tangential_traction(&u, s.nu, &grid)?;
    println!("G0 = {g0:.12e}");
    println!("divergence residual = {:.3e}", stats.divergence_residual);
    let rep = LimitReport {
        g0,
        x: grid.x_faces().to_vec(),
        trace: u.walls.bottom.clone(),
        traction: t,
        stats,
    };
    if s.formats.csv {
        let rows: Vec<Vec<Cell>> = (0..rep.x.len())
            .map(|i| vec![Cell::Num(rep.x[i]), Cell::Num(rep.trace[i]), Cell::Num(rep.traction[i])])
            .collect();
        write_csv(&csv_path(dir, "limit.csv"), &["x", "u_trace", "traction"], &rows)?;
    }
    if s.formats.json {
        write_json(&dir.join("limit.json"), &rep)?;
    }
    if s.formats.svg {
        let zip = |v: &[f64]| rep.x.iter().copied().zip(v.iter().copied()).collect();
        let svg = svg_plot(
            "bottom trace and traction",
            "x",
            "value",
            &[
                Series {
                    name: "u trace".into(),
                    points: zip(&rep.trace),
                },
                Series {
                    name: "traction".into(),
                    points: zip(&rep.traction),
                },
            ],
            false,
        );
        write_svg(&dir.join("limit.svg"), &svg)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct ThinLayerRow {
    bounds: BoundsEntry,
    x: Vec<f64>,
    interface_trace: Vec<f64>,
    stats: SolveStats,
}

fn resolution(s: &Settings) -> Resolution {
    Resolution {
        nx: s.nx,
        ny: s.ny,
        grading: s.grading,
        layer_rows: s.layer_rows,
    }
}

fn thin_problem(s: &Settings, eps: f64) -> Result<ThinLayerProblem> {
    let layer = LayerProfile::new(s.layer_kind, s.profile()?, eps)?;
    Ok(ThinLayerProblem {
        domain: DomainSpec::new(s.lx, s.lateral)?.with_layer(layer)?,
        nu: s.nu,
        f: forcing(s)?,
        model: s.model,
    })
}

fn cmd_thinlayer(s: &Settings, dir: &Path) -> Result<i32> {
    let mut rows = Vec::new();
    for &eps in &s.eps {
        let prob = thin_problem(s, eps)?;
        let sol = solve_thin_layer(&prob, &resolution(s), &s.solver)?;
        let bounds = BoundsEntry::from_solution(&sol, &prob)?;
        let (og, r) = restrict_to_omega(&sol.state, &sol.grid, s.nu, eps)?;
        println!("eps = {eps}: Phi = {:.12e}", bounds.phi_eps);
        rows.push(ThinLayerRow {
            bounds,
            x: og.x_faces().to_vec(),
            interface_trace: r.walls.bottom,
            stats: sol.stats,
        });
    }
    if s.formats.csv {
        let table: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Num(r.bounds.eps),
                    Cell::Num(r.bounds.phi_eps),
                    Cell::Num(r.bounds.u_l2_sq),
                    Cell::Num(r.bounds.p_l2),
                    Cell::Int(r.stats.cg_iters),
                    Cell::Int(r.stats.picard_iters),
                ]
            })
            .collect();
        write_csv(
            &csv_path(dir, "thinlayer.csv"),
            &["eps", "phi_eps", "u_l2_sq", "p_l2", "cg_iters", "picard_iters"],
            &table,
        )?;
    }
    if s.formats.json {
        write_json(&dir.join("thinlayer.json"), &rows)?;
    }
    if s.formats.svg {
        let series: Vec<Series> = rows
            .iter()
            .map(|r| Series {
                name: format!("eps = {}", r.bounds.eps),
                points: r.x.iter().copied().zip(r.interface_trace.iter().copied()).collect(),
            })
            .collect();
        write_svg(
            &dir.join("thinlayer.svg"),
            &svg_plot("velocity at the layer interface", "x", "u", &series, false),
        )?;
    }
    Ok(0)
}

/// Sweep setup described by the settings.
pub fn sweep_setup(s: &Settings) -> Result<SweepSetup> {
    Ok(SweepSetup {
        lx: s.lx,
        lateral: s.lateral,
        profile: s.profile()?,
        kind: s.layer_kind,
        eps_list: s.eps.clone(),
        f: forcing(s)?,
        nu: s.nu,
        spec: wall_law(s)?,
        res: resolution(s),
        model: s.model,
    })
}

pub fn sweep_rows(r: &SweepReport) -> Vec<Vec<Cell>> {
    r.entries
        .iter()
        .map(|e| {
            vec![
                Cell::Num(e.eps),
                Cell::Num(e.phi_eps),
                Cell::Num(e.g_eps),
                Cell::Num(r.g0),
                Cell::Num(e.l2_err_u),
                Cell::Num(e.l2_err_p),
                Cell::Int(e.cg_iters),
                Cell::Int(e.picard_iters),
            ]
        })
        .collect()
}

/// Writes `sweep.csv`, `sweep.json` and `sweep.svg` as selected.
pub fn write_sweep(r: &SweepReport, dir: &Path, s: &Settings) -> Result<()> {
    if s.formats.csv {
        write_csv(&csv_path(dir, "sweep.csv"), &SWEEP_HEADER, &sweep_rows(r))?;
    }
    if s.formats.json {
        write_json(&dir.join("sweep.json"), r)?;
    }
    if s.formats.svg {
        let col = |f: fn(&crate::gammaconv::SweepEntry) -> f64| r.entries.iter().map(|e| (e.eps, f(e))).collect();
        let svg = svg_plot(
            "errors against the limit problem",
            "eps",
            "L2 error",
            &[
                Series {
                    name: "velocity".into(),
                    points: col(|e| e.l2_err_u),
                },
                Series {
                    name: "pressure".into(),
                    points: col(|e| e.l2_err_p),
                },
            ],
            true,
        );
        write_svg(&dir.join("sweep.svg"), &svg)?;
    }
    Ok(())
}

fn cmd_sweep(s: &Settings, dir: &Path) -> Result<i32> {
    let r = run_sweep(&sweep_setup(s)?, &s.solver, s.jobs)?;
    write_sweep(&r, dir, s)?;
    println!("G0 = {:.12e}", r.g0);
    for e in &r.entries {
        match &e.error {
            None => println!("eps = {}: |u - u0| = {:.6e}, G = {:.12e}", e.eps, e.l2_err_u, e.g_eps),
            Some(msg) => println!("eps = {}: failed: {msg}", e.eps),
        }
    }
    match (&r.rate, &r.rate_note) {
        (Some(fit), _) => println!("fitted rate alpha = {:.4} (C = {:.4e})", fit.alpha, fit.c),
        (None, Some(note)) => println!("no rate: {note}"),
        _ => {}
    }
    if let Some(b) = &r.bounds {
        println!("bounds envelope ratios: {:.4} {:.4} {:.4}", b.phi_ratio, b.u_ratio, b.p_ratio);
    }
    Ok(if r.failed { 2 } else { 0 })
}

pub fn control_rows(r: &ConcentrationReport) -> Vec<Vec<Cell>> {
    r.entries
        .iter()
        .map(|e| {
            vec![
                Cell::Num(e.m),
                Cell::Num(e.f_value),
                Cell::Num(e.work_identity_residual),
                Cell::Num(e.mass_residual),
                Cell::Num(e.band_fraction),
                Cell::Num(e.int_abs_u_over_m),
                Cell::Num(r.max_traction),
            ]
        })
        .collect()
}

#[derive(Serialize)]
struct ControlJson<'a> {
    report: &'a ConcentrationReport,
    x: &'a [f64],
    h: Vec<&'a [f64]>,
}

/// Writes `control.csv`, `control.json` and `control.svg` as selected.
pub fn write_control(r: &ConcentrationReport, grid: &MacGrid, dir: &Path, s: &Settings) -> Result<()> {
    if s.formats.csv {
        write_csv(&csv_path(dir, "control.csv"), &CONTROL_HEADER, &control_rows(r))?;
    }
    if s.formats.json {
        let j = ControlJson {
            report: r,
            x: grid.x_faces(),
            h: r.entries.iter().map(|e| e.h.as_slice()).collect(),
        };
        write_json(&dir.join("control.json"), &j)?;
    }
    if s.formats.svg {
        let series: Vec<Series> = r
            .entries
            .iter()
            .map(|e| Series {
                name: format!("m = {}", e.m),
                points: grid.x_faces().iter().copied().zip(e.h.iter().map(|h| h / e.m)).collect(),
            })
            .collect();
        write_svg(
            &dir.join("control.svg"),
            &svg_plot("optimal coefficient h / m", "x", "h / m", &series, false),
        )?;
    }
    Ok(())
}

fn cmd_control(s: &Settings, dir: &Path) -> Result<i32> {
    let grid = domain_grid(s)?;
    let f: FaceField = forcing(s)?.sample(&grid)?;
    let r = m_sweep(&s.m, &f, s.nu, &grid, &s.solver, &s.control, s.delta, s.jobs)?;
    write_control(&r, &grid, dir, s)?;
    if r.degenerate {
        println!("degenerate: the no-slip flow exerts no wall shear");
        return Ok(0);
    }
    println!("M_1 = {:.12e}", r.max_traction);
    for e in &r.entries {
        match &e.error {
            None => println!(
                "m = {}: band fraction {:.4}, int|u|/m = {:.6e}, J_m = {:.3e}",
                e.m, e.band_fraction, e.int_abs_u_over_m, e.j_m
            ),
            Some(msg) => println!("m = {}: failed: {msg}", e.m),
        }
    }
    Ok(if r.failed { 2 } else { 0 })
}

/// Tolerance of the Poiseuille check.
pub const POISEUILLE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct PoiseuilleCheck {
    pub trace_error: f64,
    pub profile_error: f64,
    pub y: Vec<f64>,
    pub computed: Vec<f64>,
    pub exact: Vec<f64>,
    pub passed: bool,
}

/// Periodic channel, `nu = 1`, `f = (2, 0)`, `h = 1`: the slip flow is
/// `u = -y^2 + y/2 + 1/2` with trace `1/2`.
pub fn poiseuille_check(nx: usize, ny: usize, model: FlowModel, cfg: &crate::stokes::SolverConfig) -> Result<PoiseuilleCheck> {
    let grid = build_domain_grid(&DomainSpec::new(1.0, Lateral::Periodic)?, nx, ny, 1.0)?;
    let f = FaceField::from_fn(&grid, |_, _| (2.0, 0.0));
    let (u, _) = solve_limit(&f, 1.0, &WallLawSpec::over_h(1.0, Profile::flat(1.0)), model, &grid, cfg)?;
    let trace_error = u.walls.bottom[..nx].iter().map(|t| (t - 0.5).abs()).fold(0.0, f64::max);
    let exact_at = |y: f64| -y * y + 0.5 * y + 0.5;
    let y: Vec<f64> = (0..ny).map(|j| grid.yc(j)).collect();
    let mut profile_error = 0.0f64;
    for j in 0..ny {
        for i in 0..nx {
            profile_error = profile_error.max((u.u[j * (nx + 1) + i] - exact_at(y[j])).abs());
        }
    }
    let computed: Vec<f64> = (0..ny).map(|j| u.u[j * (nx + 1)]).collect();
    let exact = y.iter().map(|&y| exact_at(y)).collect();
    Ok(PoiseuilleCheck {
        passed: trace_error <= POISEUILLE_TOL && profile_error <= POISEUILLE_TOL,
        trace_error,
        profile_error,
        y,
        computed,
        exact,
    })
}

fn cmd_poiseuille(s: &Settings, dir: &Path) -> Result<i32> {
    let c = poiseuille_check(s.nx, s.ny, s.model, &s.solver)?;
    println!("trace error = {:.3e}", c.trace_error);
    println!("profile error = {:.3e}", c.profile_error);
    println!("{}", if c.passed { "PASS" } else { "FAIL" });
    if s.formats.csv {
        let rows: Vec<Vec<Cell>> = (0..c.y.len())
            .map(|j| vec![Cell::Num(c.y[j]), Cell::Num(c.computed[j]), Cell::Num(c.exact[j])])
            .collect();
        write_csv(&csv_path(dir, "poiseuille.csv"), &["y", "u_computed", "u_exact"], &rows)?;
    }
    if s.formats.json {
        write_json(&dir.join("poiseuille.json"), &c)?;
    }
    if s.formats.svg {
        let zip = |v: &[f64]| c.y.iter().copied().zip(v.iter().copied()).collect();
        let svg = svg_plot(
            "slip Poiseuille profile",
            "y",
            "u",
            &[
                Series {
                    name: "computed".into(),
                    points: zip(&c.computed),
                },
                Series {
                    name: "exact".into(),
                    points: zip(&c.exact),
                },
            ],
            false,
        );
        write_svg(&dir.join("poiseuille.svg"), &svg)?;
    }
    Ok(if c.passed { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parameter("x".into())), 1);
        assert_eq!(
            exit_code(&Error::NonConvergence {
                solver: "cg",
                iterations: 1,
                residual: 1.0
            }),
            2
        );
        assert_eq!(exit_code(&Error::Io("x".into())), 3);
    }

    #[test]
    fn headers_are_fixed() {
        assert_eq!(SWEEP_HEADER.join(","), "eps,phi_eps,g_eps,g0,l2_err_u,l2_err_p,cg_iters,picard_iters");
        assert_eq!(
            CONTROL_HEADER.join(","),
            "m,F_value,work_identity_residual,mass_residual,band_fraction_1,int_abs_u1_over_m,M_1"
        );
    }

    #[test]
    fn unknown_subcommand_is_config_error() {
        assert_eq!(run(["navier-wall", "frobnicate"]), 1);
        assert_eq!(run(["navier-wall", "cell", "--set", "nx"]), 1);
    }

    #[test]
    fn poiseuille_check_small() {
        let c = poiseuille_check(8, 32, FlowModel::Stokes, &Default::default()).unwrap();
        assert!(c.trace_error < 1e-2 && c.profile_error < 1e-2);
    }
}
