//! The composite thin-layer problem: the fluid domain plus a layer of depth
//! `eps h` below it with viscosity `nu eps`, no-slip on the outer boundary.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fields::{
    dirichlet_energy, pressure_l2_diff, remove_mean, velocity_l2, BoundaryCondition, FlowState, Forcing,
    ViscosityField,
};
use crate::grid::{build_layered_grid, CellKind, DomainSpec, MacGrid};
use crate::stokes::{solve_flow, FlowModel, SolveStats, SolverConfig};

/// Grid resolution of the fluid domain and of the layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub nx: usize,
    pub ny: usize,
    /// Ratio of the top to the bottom row height of the fluid domain.
    pub grading: f64,
    /// Rows across the deepest point of the layer.
    pub layer_rows: usize,
}

impl Resolution {
    pub fn uniform(nx: usize, ny: usize) -> Resolution {
        Resolution {
            nx,
            ny,
            grading: 1.0,
            layer_rows: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThinLayerProblem {
    /// Domain with a layer profile attached.
    pub domain: DomainSpec,
    pub nu: f64,
    pub f: Forcing,
    pub model: FlowModel,
}

impl ThinLayerProblem {
    pub fn eps(&self) -> Result<f64> {
        match &self.domain.layer {
            Some(l) => Ok(l.eps),
            None => param("thin-layer problem needs a layer profile"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eps()?;
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return param(format!("viscosity must be positive, got {}", self.nu));
        }
        Ok(())
    }

    /// `nu` on the fluid domain, `nu eps` in the layer.
    pub fn viscosity(&self, grid: &MacGrid) -> Result<ViscosityField> {
        Ok(ViscosityField::composite(grid, self.nu, self.nu * self.eps()?))
    }
}

#[derive(Debug, Clone)]
pub struct ThinLayerSolution {
    pub grid: MacGrid,
    pub state: FlowState,
    pub stats: SolveStats,
}

pub fn solve_thin_layer(prob: &ThinLayerProblem, res: &Resolution, cfg: &SolverConfig) -> Result<ThinLayerSolution> {
    solve_thin_layer_from(prob, res, cfg, None)
}

pub(crate) fn solve_thin_layer_from(
    prob: &ThinLayerProblem,
    res: &Resolution,
    cfg: &SolverConfig,
    initial: Option<&FlowState>,
) -> Result<ThinLayerSolution> {
    prob.validate()?;
    let grid = build_layered_grid(&prob.domain, res.nx, res.ny, res.grading, res.layer_rows)?;
    let visc = prob.viscosity(&grid)?;
    let f = prob.f.sample(&grid)?;
    let bc = BoundaryCondition::no_slip(&grid);
    let (state, stats) = solve_flow(prob.model, &grid, &visc, &bc, &f, cfg, initial)?;
    Ok(ThinLayerSolution { grid, state, stats })
}

/// `nu int_Omega |grad u|^2 + nu eps int_layer |grad u|^2`.
pub fn phi_eps_energy(state: &FlowState, prob: &ThinLayerProblem, grid: &MacGrid) -> Result<f64> {
    dirichlet_energy(state, &prob.viscosity(grid)?, grid)
}

/// Restriction of a composite state to the fluid domain. The bottom trace
/// is the interface value implied by the flux balance across the interface.
pub fn restrict_to_omega(state: &FlowState, grid: &MacGrid, nu: f64, eps: f64) -> Result<(MacGrid, FlowState)> {
    state.check(grid)?;
    let r = grid.omega_row();
    if r == 0 {
        return param("grid has no rows below the fluid domain");
    }
    let omega = grid.omega_part();
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = FlowState::zeros(&omega);
    out.u.copy_from_slice(&state.u[r * (nx + 1)..]);
    out.v.copy_from_slice(&state.v[r * nx..]);
    out.p.copy_from_slice(&state.p[r * nx..]);
    remove_mean(&mut out.p, &omega);
    out.walls.top.copy_from_slice(&state.walls.top);
    out.walls.left.copy_from_slice(&state.walls.left[r..]);
    out.walls.right.copy_from_slice(&state.walls.right[r..]);
    out.walls.solid = state.walls.solid;
    let (dy_above, dy_below) = (grid.dy(r), grid.dy(r - 1));
    for i in 0..=nx {
        let col_fluid = |c: isize| -> bool {
            let c = if grid.periodic_x() {
                c.rem_euclid(nx as isize)
            } else if c < 0 || c >= nx as isize {
                return false;
            } else {
                c
            };
            grid.cell(c as usize, r - 1) == CellKind::Layer
        };
        let above = state.u[r * (nx + 1) + i];
        if col_fluid(i as isize - 1) && col_fluid(i as isize) {
            let below = state.u[(r - 1) * (nx + 1) + i];
            let c1 = nu / (0.5 * dy_above);
            let c2 = nu * eps / (0.5 * dy_below);
            out.walls.bottom[i] = (c1 * above + c2 * below) / (c1 + c2);
        }
    }
    debug_assert_eq!(out.u.len(), (nx + 1) * (ny - r));
    Ok((omega, out))
}

/// Quantities bounded uniformly in `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub eps: f64,
    pub phi_eps: f64,
    pub u_l2_sq: f64,
    pub p_l2: f64,
}

impl BoundsEntry {
    pub fn from_solution(sol: &ThinLayerSolution, prob: &ThinLayerProblem) -> Result<BoundsEntry> {
        let zero = vec![0.0; sol.state.p.len()];
        Ok(BoundsEntry {
            eps: prob.eps()?,
            phi_eps: phi_eps_energy(&sol.state, prob, &sol.grid)?,
            u_l2_sq: velocity_l2(&sol.state, &sol.grid)?.powi(2),
            p_l2: pressure_l2_diff(&sol.state.p, &zero, &sol.grid)?,
        })
    }
}

/// Growth factor allowed across a sweep before a quantity is flagged.
pub const BOUNDS_ENVELOPE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub entries: Vec<BoundsEntry>,
    /// Max over min across the sweep, per quantity (1 when all vanish).
    pub phi_ratio: f64,
    pub u_ratio: f64,
    pub p_ratio: f64,
    pub envelope: f64,
    pub passed: bool,
}

fn spread(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(0.0f64, f64::max);
    let min = values.fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Checks that energy, velocity and pressure norms stay within a fixed
/// envelope across an `eps` sweep.
pub fn check_a_priori_bounds(results: &[BoundsEntry]) -> Result<BoundsReport> {
    if results.len() < 2 {
        return param("a-priori bounds need at least two values of eps");
    }
    if results
        .iter()
        .any(|e| ![e.phi_eps, e.u_l2_sq, e.p_l2].iter().all(|x| x.is_finite() && *x >= 0.0))
    {
        return Err(Error::Evaluation("bound quantities must be finite and nonnegative".into()));
    }
    let phi_ratio = spread(results.iter().map(|e| e.phi_eps));
    let u_ratio = spread(results.iter().map(|e| e.u_l2_sq));
    let p_ratio = spread(results.iter().map(|e| e.p_l2));
    Ok(BoundsReport {
        entries: results.to_vec(),
        phi_ratio,
        u_ratio,
        p_ratio,
        envelope: BOUNDS_ENVELOPE,
        passed: phi_ratio < BOUNDS_ENVELOPE && u_ratio < BOUNDS_ENVELOPE && p_ratio < BOUNDS_ENVELOPE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Lateral, LayerProfile, Profile, ProfileKind};

    fn problem(eps: f64, f: Forcing) -> ThinLayerProblem {
        let layer = LayerProfile::new(ProfileKind::Fixed, Profile::flat(1.0), eps).unwrap();
        ThinLayerProblem {
            domain: DomainSpec::new(1.0, Lateral::Periodic).unwrap().with_layer(layer).unwrap(),
            nu: 1.0,
            f,
            model: FlowModel::Stokes,
        }
    }

    #[test]
    fn zero_forcing_rests() {
        let sol = solve_thin_layer(&problem(0.1, Forcing::zero()), &Resolution::uniform(8, 16), &SolverConfig::default())
            .unwrap();
        assert_eq!(sol.state.max_abs_velocity(), 0.0);
    }

    #[test]
    fn flat_layer_matches_channel_reduction() {
        // periodic channel: u'' = -f/nu above, u'' = -f/(nu eps) in the layer,
        // with flux continuity at y = 0 and no-slip at y = -eps and y = 1
        let eps = 0.1;
        let prob = problem(eps, Forcing::constant(1.0, 0.0));
        let sol = solve_thin_layer(&prob, &Resolution::uniform(8, 64), &SolverConfig::default()).unwrap();
        // above: u = -y^2/2 + a y + b; layer: u = -(y+eps)^2/(2 eps) + c (y + eps)
        // continuity u(0): b = -eps/2 + c eps; flux: a = eps * (-(eps)/eps + c) = eps (c - 1)
        // u(1) = 0: -1/2 + a + b = 0
        let c = (0.5 + 1.5 * eps) / (2.0 * eps);
        let a = eps * (c - 1.0);
        let b = -eps / 2.0 + c * eps;
        assert!((-0.5 + a + b).abs() < 1e-12);
        let (omega, r) = restrict_to_omega(&sol.state, &sol.grid, 1.0, eps).unwrap();
        for j in 0..omega.ny() {
            let y = omega.yc(j);
            let exact = -y * y / 2.0 + a * y + b;
            assert!((r.u[j * 9 + 4] - exact).abs() < 2e-3, "{} {}", r.u[j * 9 + 4], exact);
        }
        assert!((r.walls.bottom[4] - b).abs() < 2e-3);
        let bottom = sol.state.u[4];
        assert!(bottom.abs() < 0.2 * b);
        assert!(sol.state.max_abs_velocity() > 0.0);
    }

    #[test]
    fn phi_eps_weights() {
        let prob = problem(0.1, Forcing::zero());
        let g = build_layered_grid(&prob.domain, 8, 16, 1.0, 8).unwrap();
        let r = g.omega_row();
        // field living only well inside the layer
        let mut s = FlowState::zeros(&g);
        s.u[3 * 9 + 4] = 1.0;
        let e_layer = phi_eps_energy(&s, &prob, &g).unwrap();
        let e1 = dirichlet_energy(&s, &ViscosityField::uniform(&g, 1.0), &g).unwrap();
        assert!((e_layer - 0.1 * e1).abs() < 1e-12 * e1);
        // field living only well inside the fluid domain
        let mut s = FlowState::zeros(&g);
        s.u[(r + 5) * 9 + 4] = 1.0;
        let e = phi_eps_energy(&s, &prob, &g).unwrap();
        let e1 = dirichlet_energy(&s, &ViscosityField::uniform(&g, 1.0), &g).unwrap();
        assert_eq!(e, e1);
        assert_eq!(phi_eps_energy(&FlowState::zeros(&g), &prob, &g).unwrap(), 0.0);
    }

    #[test]
    fn bounds_report() {
        let e = |eps, x| BoundsEntry {
            eps,
            phi_eps: x,
            u_l2_sq: x,
            p_l2: x,
        };
        assert!(check_a_priori_bounds(&[e(0.1, 1.0)]).is_err());
        let r = check_a_priori_bounds(&[e(0.1, 0.0), e(0.05, 0.0)]).unwrap();
        assert!(r.passed && r.phi_ratio == 1.0);
        let r = check_a_priori_bounds(&[e(0.1, 1.0), e(0.05, 12.0)]).unwrap();
        assert!(!r.passed);
        let r = check_a_priori_bounds(&[e(0.1, 1.0), e(0.05, 2.0), e(0.025, 3.0)]).unwrap();
        assert!(r.passed && (r.u_ratio - 3.0).abs() < 1e-15);
    }
}
