//! Periodic cell problems on `Z_h = {-1/2 < y1 < 1/2, -h(y1) < y2 < 0}` and
//! the slip coefficients they produce.
//!
//! The longitudinal problem is a 2D Stokes solve with unit body force, the
//! rough bottom moving with unit tangential speed and the top at rest. For
//! a profile extruded in the transverse direction the transverse problem
//! reduces to the scalar Poisson problem `-lap phi = 1` with the same data.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::fields::{bilinear_with, BoundaryCondition, FaceField, FlowState, Stencil, ViscosityField, WallCondition};
use crate::grid::{build_cell_domain, MacGrid, Profile};
use crate::linalg::BandedSpd;
use crate::stokes::{SolveStats, SolverConfig, StokesOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellDirection {
    Longitudinal,
    Transverse,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub direction: CellDirection,
    pub profile: String,
    pub grid: MacGrid,
    /// In-plane velocity (zero for the transverse problem).
    pub w: FlowState,
    /// Out-of-plane velocity per cell (zero for the longitudinal problem).
    pub w3: Vec<f64>,
    /// Value of `w3` on the rough bottom and on the top.
    pub w3_walls: [f64; 2],
    pub q: Vec<f64>,
    /// `int |grad w|^2`.
    pub c: f64,
    pub stats: SolveStats,
}

/// `K = nu diag(c1, c2)` plus the computed cross term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMatrix {
    pub k: [[f64; 2]; 2],
    pub c1: f64,
    pub c2: f64,
    /// `int grad w1 . grad w2`.
    pub cross: f64,
}

pub fn solve_cell_longitudinal(h: &Profile, nx: usize, ny: usize, cfg: &SolverConfig) -> Result<CellResult> {
    let grid = build_cell_domain(h, nx, ny)?;
    let visc = ViscosityField::uniform(&grid, 1.0);
    let bc = BoundaryCondition {
        bottom: WallCondition::Dirichlet { u: 1.0, v: 0.0 },
        top: WallCondition::NO_SLIP,
        left: WallCondition::Periodic,
        right: WallCondition::Periodic,
        solid: [1.0, 0.0],
    };
    let f = FaceField::from_fn(&grid, |_, _| (1.0, 0.0));
    let (w, stats) = StokesOperator::new(&grid, &visc, &bc)?.solve(&f, None, cfg)?;
    let st = Stencil::new(&grid, &visc)?;
    let c = bilinear_with(&st, &w, &w);
    let n = grid.nx() * grid.ny();
    Ok(CellResult {
        direction: CellDirection::Longitudinal,
        profile: h.name().to_string(),
        q: w.p.clone(),
        w,
        w3: vec![0.0; n],
        w3_walls: [0.0, 0.0],
        c,
        grid,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarEnd {
    Cell(usize),
    Rough,
    Top,
}

/// Cell-centred five-point links of the periodic cell domain, each listed once.
fn scalar_links(grid: &MacGrid) -> Vec<(usize, ScalarEnd, f64)> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut links = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !grid.is_fluid(i, j) {
                continue;
            }
            let k = j * nx + i;
            let (dx, dy) = (grid.dx(i), grid.dy(j));
            let e = (i + 1) % nx;
            if grid.is_fluid(e, j) {
                links.push((k, ScalarEnd::Cell(j * nx + e), dy / (0.5 * (dx + grid.dx(e)))));
            } else {
                links.push((k, ScalarEnd::Rough, dy / (0.5 * dx)));
            }
            let wcol = (i + nx - 1) % nx;
            if !grid.is_fluid(wcol, j) {
                links.push((k, ScalarEnd::Rough, dy / (0.5 * dx)));
            }
            if j + 1 == ny {
                links.push((k, ScalarEnd::Top, dx / (0.5 * dy)));
            } else if grid.is_fluid(i, j + 1) {
                links.push((k, ScalarEnd::Cell(k + nx), dx / (0.5 * (dy + grid.dy(j + 1)))));
            } else {
                links.push((k, ScalarEnd::Rough, dx / (0.5 * dy)));
            }
            if j == 0 || !grid.is_fluid(i, j - 1) {
                links.push((k, ScalarEnd::Rough, dx / (0.5 * dy)));
            }
        }
    }
    links
}

fn scalar_bilinear(grid: &MacGrid, a: &[f64], aw: [f64; 2], b: &[f64], bw: [f64; 2]) -> f64 {
    let val = |x: &[f64], w: [f64; 2], e: ScalarEnd| match e {
        ScalarEnd::Cell(k) => x[k],
        ScalarEnd::Rough => w[0],
        ScalarEnd::Top => w[1],
    };
    scalar_links(grid)
        .into_iter()
        .map(|(k, e, c)| c * (a[k] - val(a, aw, e)) * (b[k] - val(b, bw, e)))
        .sum()
}

pub fn solve_cell_transverse(h: &Profile, nx: usize, ny: usize) -> Result<CellResult> {
    let start = std::time::Instant::now();
    let grid = build_cell_domain(h, nx, ny)?;
    let n = grid.nx() * grid.ny();
    let mut map: Vec<Option<usize>> = vec![None; n];
    let mut count = 0usize;
    for (k, kind) in grid.mask().iter().enumerate() {
        if kind.is_fluid() {
            map[k] = Some(count);
            count += 1;
        }
    }
    let links = scalar_links(&grid);
    let bw = links
        .iter()
        .filter_map(|&(k, e, _)| match e {
            ScalarEnd::Cell(m) => Some(map[k]?.abs_diff(map[m]?)),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut a = BandedSpd::zeros(count, bw);
    let mut rhs = vec![0.0; count];
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if let Some(k) = map[j * grid.nx() + i] {
                rhs[k] = grid.dx(i) * grid.dy(j);
            }
        }
    }
    let walls = [1.0, 0.0];
    for &(k, e, c) in &links {
        let ik = map[k].expect("links start at fluid cells");
        a.add(ik, ik, c);
        match e {
            ScalarEnd::Cell(m) => {
                let im = map[m].expect("fluid neighbour");
                a.add(im, im, c);
                a.add(ik, im, -c);
            }
            ScalarEnd::Rough => rhs[ik] += c * walls[0],
            ScalarEnd::Top => rhs[ik] += c * walls[1],
        }
    }
    a.factor()?.solve(&mut rhs);
    let mut w3 = vec![0.0; n];
    for (k, m) in map.iter().enumerate() {
        if let Some(m) = m {
            w3[k] = rhs[*m];
        }
    }
    let c = scalar_bilinear(&grid, &w3, walls, &w3, walls);
    Ok(CellResult {
        direction: CellDirection::Transverse,
        profile: h.name().to_string(),
        w: FlowState::zeros(&grid),
        q: vec![0.0; n],
        w3,
        w3_walls: walls,
        c,
        grid,
        stats: SolveStats {
            wall_time: start.elapsed().as_secs_f64(),
            ..Default::default()
        },
    })
}

/// `int grad w^a . grad w^b` summed over all three velocity components.
pub fn cross_coefficient(a: &CellResult, b: &CellResult) -> Result<f64> {
    if a.grid.x_faces() != b.grid.x_faces() || a.grid.y_faces() != b.grid.y_faces() || a.grid.mask() != b.grid.mask()
    {
        return param("cell results live on different cell domains");
    }
    let st = Stencil::new(&a.grid, &ViscosityField::uniform(&a.grid, 1.0))?;
    Ok(bilinear_with(&st, &a.w, &b.w) + scalar_bilinear(&a.grid, &a.w3, a.w3_walls, &b.w3, b.w3_walls))
}

pub fn effective_matrix(long: &CellResult, trans: &CellResult, nu: f64) -> Result<EffectiveMatrix> {
    if long.direction != CellDirection::Longitudinal || trans.direction != CellDirection::Transverse {
        return param("effective matrix needs a longitudinal and a transverse cell result");
    }
    if long.profile != trans.profile {
        return param(format!("profile mismatch: '{}' vs '{}'", long.profile, trans.profile));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return param(format!("viscosity must be positive, got {nu}"));
    }
    let cross = cross_coefficient(long, trans)?;
    Ok(EffectiveMatrix {
        k: [[nu * long.c, nu * cross], [nu * cross, nu * trans.c]],
        c1: long.c,
        c2: trans.c,
        cross,
    })
}

/// `c(H)` for the flat cell of depth `H`: from `-phi'' = 1`, `phi(-H) = 1`, `phi(0) = 0`.
pub fn flat_cell_coefficient(depth: f64) -> f64 {
    let a = -(1.0 + depth * depth / 2.0) / depth;
    ((a + depth).powi(3) - a.powi(3)) / 3.0
}
