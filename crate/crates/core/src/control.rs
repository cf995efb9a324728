//! Optimal wall coefficients: minimize
//! `F(h, u) = (nu/2) int |grad u|^2 + (1/2) int u^2 / h + int (u . grad) u . u - int f . u`
//! over coefficient functions `h >= 0` of fixed mass `int h = m` on the
//! bottom edge, with `u = u^h` the flow under the wall law `mu = 1/h`.
//!
//! The minimizer satisfies `h = m |u| / int |u|`; it is found by damped
//! fixed-point iteration on that relation. As `m -> 0` the optimal `h / m`
//! concentrates where the no-slip flow has maximal wall shear.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fields::{
    advection_with, dirichlet_energy, divergence_residual, face_inner, work, BoundaryCondition, FaceField, FlowState, Slip,
    ViscosityField, WallCondition,
};
use crate::grid::{BcTag, MacGrid};
use crate::stokes::{FlowModel, SolverConfig};
use crate::walllaw::{flux_traction, solve_with_bc, tangential_traction};

const MIN_THETA: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Damping of the `h` update, in `(0, 1]`.
    pub theta: f64,
    /// Relative `L^1` change of `h` that ends the iteration.
    pub tol: f64,
    pub max_iters: usize,
    pub model: FlowModel,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            theta: 1.0,
            tol: 1e-8,
            max_iters: 500,
            model: FlowModel::NavierStokes,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return param(format!("damping must lie in (0, 1], got {}", self.theta));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return param("control tolerance must lie in (0, 1)");
        }
        if self.max_iters == 0 {
            return param("control needs at least one iteration");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlIterate {
    pub f_value: f64,
    /// `int |h - h*| / m` before the update.
    pub update_residual: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub m: f64,
    /// Coefficient at each bottom trace node.
    pub h: Vec<f64>,
    #[serde(skip)]
    pub state: Option<FlowState>,
    pub history: Vec<ControlIterate>,
    pub iterations: usize,
    pub converged: bool,
    /// The trace vanished identically; `h` fell back to the uniform density.
    pub inactive: bool,
    pub f_value: f64,
    pub work: f64,
    /// `|int h - m| / m`.
    pub mass_residual: f64,
    pub update_residual: f64,
}

impl ControlState {
    pub fn flow(&self) -> &FlowState {
        self.state.as_ref().expect("control state carries its flow")
    }
}

fn check_grid(grid: &MacGrid) -> Result<()> {
    if grid.tags().bottom != BcTag::NavierSlip || grid.omega_row() != 0 {
        return param("the control problem needs a domain grid whose bottom edge carries the wall law");
    }
    Ok(())
}

/// Wall law `mu = 1/h`; nodes with `h = 0` are no-slip.
pub fn boundary_for(h: &[f64], grid: &MacGrid) -> BoundaryCondition {
    let slips = h
        .iter()
        .map(|&hi| {
            let beta = 1.0 / hi;
            if hi > 0.0 && beta.is_finite() {
                Slip::Robin(beta)
            } else {
                Slip::NoSlip
            }
        })
        .collect();
    BoundaryCondition::no_slip(grid).with_bottom(WallCondition::NavierSlip(slips))
}

pub fn mass(h: &[f64], grid: &MacGrid) -> f64 {
    grid.bottom_weights().iter().zip(h).map(|(w, x)| w * x).sum()
}

/// Evaluates `F(h, u)`; infinite when `u` slips where `h = 0`.
pub fn energy_f(h: &[f64], state: &FlowState, f: &FaceField, nu: f64, grid: &MacGrid) -> Result<f64> {
    state.check(grid)?;
    if h.len() != grid.nx() + 1 {
        return Err(Error::Conformance("coefficient does not match the bottom edge".into()));
    }
    let bulk = 0.5 * nu * dirichlet_energy(state, &ViscosityField::uniform(grid, 1.0), grid)?;
    let mut wall = 0.0;
    for ((w, hi), ub) in grid.bottom_weights().iter().zip(h).zip(&state.walls.bottom) {
        if *w == 0.0 || *ub == 0.0 {
            continue;
        }
        if *hi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        wall += 0.5 * w * ub * ub / hi;
    }
    let conv = face_inner(&advection_with(state, state, grid, false), &state.velocity(), grid)?;
    Ok(bulk + wall + conv - work(f, state, grid)?)
}

fn solve_for(
    h: &[f64],
    f: &FaceField,
    nu: f64,
    model: FlowModel,
    grid: &MacGrid,
    cfg: &SolverConfig,
    warm: Option<&FlowState>,
) -> Result<(FlowState, f64)> {
    let bc = boundary_for(h, grid);
    let (s, _) = solve_with_bc(f, nu, &bc, model, grid, cfg, warm)?;
    let fv = energy_f(h, &s, f, nu, grid)?;
    Ok((s, fv))
}

/// Optimal update `m |u_b| / int |u_b|`, or `None` when the trace vanishes.
fn target(state: &FlowState, m: f64, grid: &MacGrid) -> Option<Vec<f64>> {
    let w = grid.bottom_weights();
    let total: f64 = w.iter().zip(&state.walls.bottom).map(|(w, u)| w * u.abs()).sum();
    let scale = state.max_abs_velocity();
    if !(total > 1e-14 * scale * grid.lx()) || total == 0.0 {
        return None;
    }
    let mut h: Vec<f64> = state.walls.bottom.iter().map(|u| m * u.abs() / total).collect();
    if grid.periodic_x() {
        let n = h.len() - 1;
        h[n] = h[0];
    }
    Some(h)
}

fn renormalize(h: &mut [f64], m: f64, grid: &MacGrid) {
    let s = mass(h, grid);
    h.iter_mut().for_each(|x| *x *= m / s);
}

fn l1_gap(a: &[f64], b: &[f64], grid: &MacGrid) -> f64 {
    grid.bottom_weights().iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y).abs()).sum()
}

/// Damped fixed-point iteration `h <- (1 - theta) h + theta m |u^h| / int |u^h|`.
pub fn solve_control_fixed_point(
    m: f64,
    f: &FaceField,
    nu: f64,
    ctl: &ControlConfig,
    grid: &MacGrid,
    cfg: &SolverConfig,
) -> Result<ControlState> {
    ctl.validate()?;
    check_grid(grid)?;
    if !(m > 0.0 && m.is_finite()) {
        return param(format!("mass must be positive, got {m}"));
    }
    let mut h = vec![m / grid.lx(); grid.nx() + 1];
    renormalize(&mut h, m, grid);
    let (mut state, mut fv) = solve_for(&h, f, nu, ctl.model, grid, cfg, None)?;
    let mut theta = ctl.theta;
    let mut history = Vec::new();
    let finish = |h: Vec<f64>, state: FlowState, fv: f64, history: Vec<ControlIterate>, inactive: bool, resid: f64| {
        let w = work(f, &state, grid)?;
        let mass_residual = (mass(&h, grid) - m).abs() / m;
        Ok(ControlState {
            m,
            iterations: history.len(),
            h,
            state: Some(state),
            history,
            converged: true,
            inactive,
            f_value: fv,
            work: w,
            mass_residual,
            update_residual: resid,
        })
    };
    for _ in 0..ctl.max_iters {
        let Some(star) = target(&state, m, grid) else {
            // trace vanished: the update is undefined, keep the uniform density
            let mut uniform = vec![m / grid.lx(); h.len()];
            renormalize(&mut uniform, m, grid);
            if uniform != h {
                let (s, v) = solve_for(&uniform, f, nu, ctl.model, grid, cfg, Some(&state))?;
                state = s;
                fv = v;
            }
            return finish(uniform, state, fv, history, true, 0.0);
        };
        let resid = l1_gap(&h, &star, grid) / m;
        history.push(ControlIterate {
            f_value: fv,
            update_residual: resid,
            theta,
        });
        if resid < ctl.tol {
            return finish(h, state, fv, history, false, resid);
        }
        loop {
            let mut cand: Vec<f64> = h.iter().zip(&star).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
            renormalize(&mut cand, m, grid);
            let (s, v) = solve_for(&cand, f, nu, ctl.model, grid, cfg, Some(&state))?;
            if v <= fv + 1e-12 * (1.0 + fv.abs()) || theta <= MIN_THETA {
                h = cand;
                state = s;
                fv = v;
                break;
            }
            theta *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        solver: "control fixed point",
        iterations: ctl.max_iters,
        residual: history.last().map_or(f64::NAN, |it| it.update_residual),
    })
}

/// Perturbation `v = (u^m - u^{0,m}) / m` against the no-slip flow with the
/// same source, and the reduced functional
/// `J = (m nu / 2) int |grad v|^2 + (1/2) (int |v|)^2 + int t^{0,m} v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(skip)]
    pub v: Option<FlowState>,
    pub j_m: f64,
    pub bulk: f64,
    pub total_variation: f64,
    pub pairing: f64,
    /// `int |v|` over the bottom edge.
    pub trace_l1: f64,
}

/// The traction pairing uses the discrete wall flux of `u^{0,m}`, which is
/// the exact discrete counterpart of the boundary term in Green's formula.
/// `model` must be the one `u_m` was computed with; under Stokes the
/// advection correction of the source is absent.
#[allow(clippy::too_many_arguments)]
pub fn linearized_perturbation(
    m: f64,
    u_m: &FlowState,
    f: &FaceField,
    nu: f64,
    model: FlowModel,
    grid: &MacGrid,
    cfg: &SolverConfig,
) -> Result<Perturbation> {
    check_grid(grid)?;
    u_m.check(grid)?;
    if !(m > 0.0) {
        return param("mass must be positive");
    }
    let mut g = f.clone();
    if model == FlowModel::NavierStokes {
        let n = advection_with(u_m, u_m, grid, false);
        for (a, b) in g.u.iter_mut().zip(&n.u) {
            *a -= b;
        }
        for (a, b) in g.v.iter_mut().zip(&n.v) {
            *a -= b;
        }
    }
    let (u0m, _) = solve_with_bc(&g, nu, &BoundaryCondition::no_slip(grid), FlowModel::Stokes, grid, cfg, None)?;
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (x - y) / m).collect() };
    let mut v = FlowState::zeros(grid);
    v.u = diff(&u_m.u, &u0m.u);
    v.v = diff(&u_m.v, &u0m.v);
    v.p = diff(&u_m.p, &u0m.p);
    v.walls.bottom = diff(&u_m.walls.bottom, &u0m.walls.bottom);
    let t0 = flux_traction(&u0m, nu, grid)?;
    let w = grid.bottom_weights();
    let bulk = 0.5 * m * nu * dirichlet_energy(&v, &ViscosityField::uniform(grid, 1.0), grid)?;
    let trace_l1: f64 = w.iter().zip(&v.walls.bottom).map(|(w, x)| w * x.abs()).sum();
    let pairing: f64 = w.iter().zip(t0.iter().zip(&v.walls.bottom)).map(|(w, (t, x))| w * t * x).sum();
    let total_variation = 0.5 * trace_l1 * trace_l1;
    Ok(Perturbation {
        v: Some(v),
        j_m: bulk + total_variation + pairing,
        bulk,
        total_variation,
        pairing,
        trace_l1,
    })
}

/// One member of an `m` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEntry {
    pub m: f64,
    pub f_value: f64,
    pub work: f64,
    /// `|F + int f . u| / (1 + |int f . u|)`.
    pub work_identity_residual: f64,
    /// `|F + (1/2) int f . u| / (1 + |int f . u|)`.
    pub half_work_residual: f64,
    pub mass_residual: f64,
    /// Mass of `h / m` on the maximal-shear band.
    pub band_fraction: f64,
    /// `int |u_b| / m`.
    pub int_abs_u_over_m: f64,
    /// Moments of `h / m` against `1, x, x^2`.
    pub moments: [f64; 3],
    /// Sign of the trace on the band (`+1`, `-1`, or `0` if mixed).
    pub band_sign: f64,
    pub j_m: f64,
    pub trace_l1_v: f64,
    /// Largest divergence residual of `u^h` and `v`.
    pub divergence_residual: f64,
    pub iterations: usize,
    pub inactive: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Maximal wall shear of the no-slip flow.
    pub max_traction: f64,
    pub delta: f64,
    /// Trace nodes in the band around `+M`.
    pub band_plus: Vec<usize>,
    /// Trace nodes in the band around `-M`.
    pub band_minus: Vec<usize>,
    /// Node of maximal `|t|`.
    pub argmax: usize,
    pub traction: Vec<f64>,
    pub entries: Vec<ConcentrationEntry>,
    pub degenerate: bool,
    pub failed: bool,
}

impl ConcentrationReport {
    pub fn empty() -> ConcentrationReport {
        ConcentrationReport {
            max_traction: 0.0,
            delta: 0.05,
            band_plus: Vec::new(),
            band_minus: Vec::new(),
            argmax: 0,
            traction: Vec::new(),
            entries: Vec::new(),
            degenerate: false,
            failed: false,
        }
    }
}

/// Band of nodes where `| |t| - M | <= delta M`, split by the sign of `t`.
pub fn traction_bands(t: &[f64], grid: &MacGrid, delta: f64) -> (f64, usize, Vec<usize>, Vec<usize>) {
    let w = grid.bottom_weights();
    let mut best = (0.0, 0);
    for (i, ti) in t.iter().enumerate() {
        if w[i] > 0.0 && ti.abs() > best.0 {
            best = (ti.abs(), i);
        }
    }
    let (big_m, arg) = best;
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    if big_m > 0.0 {
        for (i, ti) in t.iter().enumerate() {
            if w[i] > 0.0 && (ti.abs() - big_m).abs() <= delta * big_m {
                if *ti > 0.0 {
                    plus.push(i);
                } else {
                    minus.push(i);
                }
            }
        }
    }
    (big_m, arg, plus, minus)
}

#[allow(clippy::too_many_arguments)]
fn sweep_member(
    m: f64,
    f: &FaceField,
    nu: f64,
    ctl: &ControlConfig,
    grid: &MacGrid,
    cfg: &SolverConfig,
    band: &[usize],
) -> Result<ConcentrationEntry> {
    let cs = solve_control_fixed_point(m, f, nu, ctl, grid, cfg)?;
    let w = grid.bottom_weights();
    let flow = cs.flow();
    let pert = linearized_perturbation(m, flow, f, nu, ctl.model, grid, cfg)?;
    let band_fraction = band.iter().map(|&i| w[i] * cs.h[i]).sum::<f64>() / m;
    let int_abs: f64 = w.iter().zip(&flow.walls.bottom).map(|(w, u)| w * u.abs()).sum();
    let mut moments = [0.0; 3];
    for ((wi, hi), x) in w.iter().zip(&cs.h).zip(grid.x_faces()) {
        for (k, mo) in moments.iter_mut().enumerate() {
            *mo += wi * hi / m * x.powi(k as i32);
        }
    }
    let signs: Vec<f64> = band.iter().map(|&i| flow.walls.bottom[i].signum()).collect();
    let band_sign = if !signs.is_empty() && signs.iter().all(|s| *s == signs[0]) {
        signs[0]
    } else {
        0.0
    };
    let scale = 1.0 + cs.work.abs();
    Ok(ConcentrationEntry {
        m,
        f_value: cs.f_value,
        work: cs.work,
        work_identity_residual: (cs.f_value + cs.work).abs() / scale,
        half_work_residual: (cs.f_value + 0.5 * cs.work).abs() / scale,
        mass_residual: cs.mass_residual,
        band_fraction,
        int_abs_u_over_m: int_abs / m,
        moments,
        band_sign,
        j_m: pert.j_m,
        trace_l1_v: pert.trace_l1,
        divergence_residual: match &pert.v {
            Some(v) => divergence_residual(flow, grid)?.max(divergence_residual(v, grid)?),
            None => divergence_residual(flow, grid)?,
        },
        iterations: cs.iterations,
        inactive: cs.inactive,
        error: None,
        h: cs.h,
    })
}

/// Solves the control problem for each `m` (strictly decreasing) and
/// measures how `h / m` concentrates on the maximal-shear band of the
/// no-slip flow.
#[allow(clippy::too_many_arguments)]
pub fn m_sweep(
    m_list: &[f64],
    f: &FaceField,
    nu: f64,
    grid: &MacGrid,
    cfg: &SolverConfig,
    ctl: &ControlConfig,
    delta: f64,
    jobs: usize,
) -> Result<ConcentrationReport> {
    ctl.validate()?;
    check_grid(grid)?;
    if m_list.len() < 3 {
        return param("an m sweep needs at least three masses");
    }
    if m_list.iter().any(|m| !(*m > 0.0 && m.is_finite())) || m_list.windows(2).any(|w| w[1] >= w[0]) {
        return param("masses must be positive and strictly decreasing");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return param("band tolerance must lie in (0, 1)");
    }
    let (u0, _) = solve_with_bc(f, nu, &BoundaryCondition::no_slip(grid), ctl.model, grid, cfg, None)?;
    let traction = tangential_traction(&u0, nu, grid)?;
    let (big_m, argmax, plus, minus) = traction_bands(&traction, grid, delta);
    let mut report = ConcentrationReport {
        max_traction: big_m,
        delta,
        band_plus: plus.clone(),
        band_minus: minus.clone(),
        argmax,
        traction,
        entries: Vec::new(),
        degenerate: big_m == 0.0,
        failed: false,
    };
    if report.degenerate {
        return Ok(report);
    }
    let band: Vec<usize> = plus.into_iter().chain(minus).collect();
    let run = |m: &f64| {
        sweep_member(*m, f, nu, ctl, grid, cfg, &band).unwrap_or_else(|e| ConcentrationEntry {
            m: *m,
            f_value: f64::NAN,
            work: f64::NAN,
            work_identity_residual: f64::NAN,
            half_work_residual: f64::NAN,
            mass_residual: f64::NAN,
            band_fraction: f64::NAN,
            int_abs_u_over_m: f64::NAN,
            moments: [f64::NAN; 3],
            band_sign: 0.0,
            j_m: f64::NAN,
            trace_l1_v: f64::NAN,
            divergence_residual: f64::NAN,
            iterations: 0,
            inactive: false,
            error: Some(e.to_string()),
            h: Vec::new(),
        })
    };
    report.entries = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| m_list.par_iter().map(run).collect())
    } else {
        m_list.iter().map(run).collect()
    };
    report.failed = report.entries.iter().any(|e| e.error.is_some());
    Ok(report)
}
