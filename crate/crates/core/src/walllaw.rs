//! Limit problem on the fluid domain alone, with a Navier wall law on the
//! bottom edge, plus its energy and the wall traction.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fields::{
    dirichlet_energy, BoundaryCondition, End, FaceField, FlowState, Slip, Stencil, ViscosityField, Wall,
    WallCondition,
};
use crate::grid::{BcTag, MacGrid, Profile};
use crate::stokes::{solve_flow, FlowModel, SolveStats, SolverConfig};

/// Density of the wall-law measure against arc length on the bottom edge.
#[derive(Debug, Clone)]
pub enum WallDensity {
    Constant(f64),
    /// `nu / h(x)`; points with `h = 0` are no-slip.
    OverH { nu: f64, h: Profile },
    /// One value per trace node (`x_faces`).
    PerFace(Vec<f64>),
    /// No-slip.
    Infinite,
    /// Free slip.
    Zero,
}

/// Diagonal wall law; one density per tangential direction (one in 2D).
#[derive(Debug, Clone)]
pub struct WallLawSpec {
    pub tangential: WallDensity,
}

impl WallLawSpec {
    pub fn new(tangential: WallDensity) -> WallLawSpec {
        WallLawSpec { tangential }
    }

    pub fn no_slip() -> WallLawSpec {
        WallLawSpec::new(WallDensity::Infinite)
    }

    pub fn free_slip() -> WallLawSpec {
        WallLawSpec::new(WallDensity::Zero)
    }

    pub fn constant(mu: f64) -> WallLawSpec {
        WallLawSpec::new(WallDensity::Constant(mu))
    }

    pub fn over_h(nu: f64, h: Profile) -> WallLawSpec {
        WallLawSpec::new(WallDensity::OverH { nu, h })
    }

    /// Slip law at each trace node of `grid`.
    pub fn slips(&self, grid: &MacGrid) -> Result<Vec<Slip>> {
        let xs = grid.x_faces();
        let check = |mu: f64| {
            if mu >= 0.0 && mu.is_finite() {
                Ok(Slip::Robin(mu))
            } else {
                param(format!("wall-law density must be finite and nonnegative, got {mu}"))
            }
        };
        match &self.tangential {
            WallDensity::Constant(mu) => {
                let s = check(*mu)?;
                Ok(vec![s; xs.len()])
            }
            WallDensity::Zero => Ok(vec![Slip::Robin(0.0); xs.len()]),
            WallDensity::Infinite => Ok(vec![Slip::NoSlip; xs.len()]),
            WallDensity::PerFace(values) => {
                if values.len() != xs.len() {
                    return Err(Error::Conformance(format!(
                        "per-face density has {} values, edge has {} nodes",
                        values.len(),
                        xs.len()
                    )));
                }
                values.iter().map(|m| check(*m)).collect()
            }
            WallDensity::OverH { nu, h } => {
                if !(*nu > 0.0) {
                    return param("viscosity must be positive");
                }
                xs.iter()
                    .map(|&x| {
                        let hx = h.eval(x)?;
                        if hx < 0.0 {
                            param(format!("profile is negative at x = {x}"))
                        } else if hx == 0.0 {
                            Ok(Slip::NoSlip)
                        } else {
                            check(nu / hx)
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn boundary_condition(&self, grid: &MacGrid) -> Result<BoundaryCondition> {
        Ok(BoundaryCondition::no_slip(grid).with_bottom(WallCondition::NavierSlip(self.slips(grid)?)))
    }
}

fn check_domain(grid: &MacGrid) -> Result<()> {
    if grid.tags().bottom != BcTag::NavierSlip || grid.omega_row() != 0 {
        return param("the limit problem needs a domain grid whose bottom edge carries the wall law");
    }
    Ok(())
}

/// Solves the limit problem: no-slip on the top and lateral walls,
/// impermeability and the wall law `-nu du/dy + mu u = 0` on the bottom.
pub fn solve_limit(
    f: &FaceField,
    nu: f64,
    spec: &WallLawSpec,
    model: FlowModel,
    grid: &MacGrid,
    cfg: &SolverConfig,
) -> Result<(FlowState, SolveStats)> {
    check_domain(grid)?;
    let bc = spec.boundary_condition(grid)?;
    solve_with_bc(f, nu, &bc, model, grid, cfg, None)
}

pub(crate) fn solve_with_bc(
    f: &FaceField,
    nu: f64,
    bc: &BoundaryCondition,
    model: FlowModel,
    grid: &MacGrid,
    cfg: &SolverConfig,
    initial: Option<&FlowState>,
) -> Result<(FlowState, SolveStats)> {
    if !(nu > 0.0 && nu.is_finite()) {
        return param(format!("viscosity must be positive, got {nu}"));
    }
    let visc = ViscosityField::uniform(grid, nu);
    solve_flow(model, grid, &visc, bc, f, cfg, initial)
}

/// `nu int |grad u|^2 + int mu u^2` over the bottom edge. Returns infinity
/// when a no-slip node carries a nonzero trace.
pub fn g0_energy(state: &FlowState, nu: f64, spec: &WallLawSpec, grid: &MacGrid) -> Result<f64> {
    let bulk = nu * dirichlet_energy(state, &ViscosityField::uniform(grid, 1.0), grid)?;
    let w = grid.bottom_weights();
    let mut wall = 0.0;
    for ((s, wi), ub) in spec.slips(grid)?.iter().zip(&w).zip(&state.walls.bottom) {
        match s {
            Slip::NoSlip => {
                if *ub != 0.0 && *wi > 0.0 {
                    return Ok(f64::INFINITY);
                }
            }
            Slip::Robin(mu) => wall += wi * mu * ub * ub,
        }
    }
    Ok(bulk + wall)
}

/// Tangential traction `-nu du/dy` at each bottom trace node, from the
/// quadratic through the trace and the first two rows.
pub fn tangential_traction(state: &FlowState, nu: f64, grid: &MacGrid) -> Result<Vec<f64>> {
    state.check(grid)?;
    if grid.ny() < 2 {
        return param("traction needs at least two rows");
    }
    let nx = grid.nx();
    let a = 0.5 * grid.dy(0);
    let b = grid.dy(0) + 0.5 * grid.dy(1);
    let mut t = vec![0.0; nx + 1];
    for (i, ti) in t.iter_mut().enumerate() {
        let ub = state.walls.bottom[i];
        let u0 = state.u[i];
        let u1 = state.u[(nx + 1) + i];
        let du = -ub * (a + b) / (a * b) + u0 * b / (a * (b - a)) - u1 * a / (b * (b - a));
        *ti = -nu * du;
    }
    Ok(t)
}

/// Traction implied by the discrete wall flux `c (u_P - u_b) / w` at each
/// node; it pairs exactly with the energy used by the solver.
pub fn flux_traction(state: &FlowState, nu: f64, grid: &MacGrid) -> Result<Vec<f64>> {
    state.check(grid)?;
    let st = Stencil::new(grid, &ViscosityField::uniform(grid, nu))?;
    let mut t = vec![0.0; grid.nx() + 1];
    for l in &st.u_links {
        if let End::Wall(Wall::Bottom(i)) = l.b {
            if l.width > 0.0 {
                t[i] = -l.c * (state.u[l.a] - state.walls.bottom[i]) / l.width;
            }
        }
    }
    if grid.periodic_x() {
        t[grid.nx()] = t[0];
    }
    Ok(t)
}

/// Summary of a limit solve for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitSummary {
    pub g0: f64,
    pub trace_mean: f64,
    pub traction_mean: f64,
    pub stats: SolveStats,
}
