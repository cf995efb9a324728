//! Staggered velocity/pressure containers and the discrete operators on them.
//!
//! `u` lives on vertical faces, index `j * (nx + 1) + i` for the face at
//! `x_faces[i]` in row `j`; `v` lives on horizontal faces, index `j * nx + i`
//! for the face at `y_faces[j]` in column `i`; `p` at cell centres. On
//! periodic grids the face `i = nx` duplicates `i = 0`.
//!
//! Operators are finite-volume: each face owns the part of its control
//! volume that lies in fluid cells, and fluxes between control volumes are
//! "links" with a conductance. The viscous operator, the Dirichlet energy and
//! the solver matrix are all built from the same link list, so the energy of
//! a solution equals the quadratic form of the operator.

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::grid::{CellKind, MacGrid};

pub fn u_index(grid: &MacGrid, i: usize, j: usize) -> usize {
    let nx = grid.nx();
    let i = if grid.periodic_x() && i == nx { 0 } else { i };
    j * (nx + 1) + i
}

pub fn v_index(grid: &MacGrid, i: usize, j: usize) -> usize {
    j * grid.nx() + i
}

/// A vector field sampled on the staggered faces (forcings, operator outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &MacGrid) -> FaceField {
        FaceField {
            u: vec![0.0; (grid.nx() + 1) * grid.ny()],
            v: vec![0.0; grid.nx() * (grid.ny() + 1)],
        }
    }

    pub fn from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> FaceField {
        let mut out = FaceField::zeros(grid);
        out.fill(grid, |x, y| Ok(f(x, y))).expect("infallible sampler");
        out
    }

    pub fn try_from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> Result<(f64, f64)>) -> Result<FaceField> {
        let mut out = FaceField::zeros(grid);
        out.fill(grid, f)?;
        Ok(out)
    }

    fn fill(&mut self, grid: &MacGrid, f: impl Fn(f64, f64) -> Result<(f64, f64)>) -> Result<()> {
        let (nx, ny) = (grid.nx(), grid.ny());
        for j in 0..ny {
            for i in 0..=nx {
                self.u[j * (nx + 1) + i] = f(grid.x_faces()[i], grid.yc(j))?.0;
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                self.v[j * nx + i] = f(grid.xc(i), grid.y_faces()[j])?.1;
            }
        }
        if grid.periodic_x() {
            for j in 0..ny {
                self.u[j * (nx + 1) + nx] = self.u[j * (nx + 1)];
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.u.iter_mut().chain(self.v.iter_mut()).for_each(|x| *x *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check(&self, grid: &MacGrid) -> Result<()> {
        if self.u.len() != (grid.nx() + 1) * grid.ny() || self.v.len() != grid.nx() * (grid.ny() + 1) {
            return Err(Error::Conformance("face field size does not match grid".into()));
        }
        Ok(())
    }
}

type ForcingFn = dyn Fn(f64, f64) -> Result<(f64, f64)> + Send + Sync;

/// Body force `f(x, y)`.
#[derive(Clone)]
pub struct Forcing {
    name: String,
    func: Arc<ForcingFn>,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing").field("name", &self.name).finish()
    }
}

impl Forcing {
    pub fn constant(a: f64, b: f64) -> Forcing {
        Forcing {
            name: format!("({a}, {b})"),
            func: Arc::new(move |_, _| Ok((a, b))),
        }
    }

    pub fn zero() -> Forcing {
        Forcing::constant(0.0, 0.0)
    }

    pub fn from_exprs(f1: Expr, f2: Expr) -> Forcing {
        Forcing {
            name: format!("({f1}, {f2})"),
            func: Arc::new(move |x, y| Ok((f1.evaluate(x, y)?, f2.evaluate(x, y)?))),
        }
    }

    pub fn parse(f1: &str, f2: &str) -> Result<Forcing> {
        Ok(Forcing::from_exprs(parse_expr(f1)?, parse_expr(f2)?))
    }

    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static) -> Forcing {
        Forcing {
            name: name.into(),
            func: Arc::new(move |x, y| Ok(f(x, y))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (a, b) = (self.func)(x, y)?;
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Evaluation(format!("forcing is not finite at ({x}, {y})")));
        }
        Ok((a, b))
    }

    pub fn sample(&self, grid: &MacGrid) -> Result<FaceField> {
        FaceField::try_from_fn(grid, |x, y| self.eval(x, y))
    }
}

/// Tangential velocity on the four domain edges and the velocity of solid
/// (masked) regions. `bottom`/`top` hold `u` at `x_faces`, `left`/`right`
/// hold `v` at `y_faces`.
#[derive(Debug, Clone, PartialEq)]
pub struct WallValues {
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub solid: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub walls: WallValues,
}

impl FlowState {
    pub fn zeros(grid: &MacGrid) -> FlowState {
        let (nx, ny) = (grid.nx(), grid.ny());
        FlowState {
            u: vec![0.0; (nx + 1) * ny],
            v: vec![0.0; nx * (ny + 1)],
            p: vec![0.0; nx * ny],
            walls: WallValues {
                bottom: vec![0.0; nx + 1],
                top: vec![0.0; nx + 1],
                left: vec![0.0; ny + 1],
                right: vec![0.0; ny + 1],
                solid: [0.0; 2],
            },
        }
    }

    /// Samples a velocity field on the faces and edges; pressure is zero and
    /// solid regions are at rest.
    pub fn from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> FlowState {
        let ff = FaceField::from_fn(grid, &f);
        let mut s = FlowState::zeros(grid);
        s.u = ff.u;
        s.v = ff.v;
        let (xf, yf) = (grid.x_faces(), grid.y_faces());
        let (y0, y1) = (yf[0], yf[grid.ny()]);
        let (x0, x1) = (xf[0], xf[grid.nx()]);
        for i in 0..=grid.nx() {
            s.walls.bottom[i] = f(xf[i], y0).0;
            s.walls.top[i] = f(xf[i], y1).0;
        }
        for j in 0..=grid.ny() {
            s.walls.left[j] = f(x0, yf[j]).1;
            s.walls.right[j] = f(x1, yf[j]).1;
        }
        s
    }

    pub fn check(&self, grid: &MacGrid) -> Result<()> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let ok = self.u.len() == (nx + 1) * ny
            && self.v.len() == nx * (ny + 1)
            && self.p.len() == nx * ny
            && self.walls.bottom.len() == nx + 1
            && self.walls.top.len() == nx + 1
            && self.walls.left.len() == ny + 1
            && self.walls.right.len() == ny + 1;
        if !ok {
            return Err(Error::Conformance(format!("state does not match a {nx} x {ny} grid")));
        }
        Ok(())
    }

    pub fn velocity(&self) -> FaceField {
        FaceField {
            u: self.u.clone(),
            v: self.v.clone(),
        }
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.p).all(|x| x.is_finite())
    }
}

/// Per-cell viscosity.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscosityField {
    pub values: Vec<f64>,
}

impl ViscosityField {
    pub fn uniform(grid: &MacGrid, nu: f64) -> ViscosityField {
        ViscosityField {
            values: vec![nu; grid.nx() * grid.ny()],
        }
    }

    /// `nu` on bulk cells and `nu_layer` on layer cells.
    pub fn composite(grid: &MacGrid, nu: f64, nu_layer: f64) -> ViscosityField {
        ViscosityField {
            values: grid
                .mask()
                .iter()
                .map(|k| if *k == CellKind::Layer { nu_layer } else { nu })
                .collect(),
        }
    }

    pub fn validate(&self, grid: &MacGrid) -> Result<()> {
        if self.values.len() != grid.nx() * grid.ny() {
            return Err(Error::Conformance("viscosity field size does not match grid".into()));
        }
        for (k, (v, kind)) in self.values.iter().zip(grid.mask()).enumerate() {
            if kind.is_fluid() && !(*v > 0.0 && v.is_finite()) {
                return param(format!("viscosity must be positive on fluid cells, got {v} at cell {k}"));
            }
        }
        Ok(())
    }

    fn at(&self, grid: &MacGrid, i: usize, j: usize) -> f64 {
        self.values[j * grid.nx() + i]
    }
}

/// Tangential condition at one trace node of a Navier-slip edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slip {
    NoSlip,
    /// Friction coefficient `beta >= 0`; `0` is free slip.
    Robin(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WallCondition {
    Dirichlet { u: f64, v: f64 },
    /// Impermeable wall with a tangential friction law per trace node
    /// (`nx + 1` nodes at `x_faces`). Bottom edge only.
    NavierSlip(Vec<Slip>),
    Periodic,
}

impl WallCondition {
    pub const NO_SLIP: WallCondition = WallCondition::Dirichlet { u: 0.0, v: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub bottom: WallCondition,
    pub top: WallCondition,
    pub left: WallCondition,
    pub right: WallCondition,
    /// Velocity of the surface of solid (masked) cells.
    pub solid: [f64; 2],
}

impl BoundaryCondition {
    /// Homogeneous no-slip on every non-periodic edge.
    pub fn no_slip(grid: &MacGrid) -> BoundaryCondition {
        let lateral = if grid.periodic_x() {
            WallCondition::Periodic
        } else {
            WallCondition::NO_SLIP
        };
        BoundaryCondition {
            bottom: WallCondition::NO_SLIP,
            top: WallCondition::NO_SLIP,
            left: lateral.clone(),
            right: lateral,
            solid: [0.0; 2],
        }
    }

    pub fn with_bottom(mut self, bottom: WallCondition) -> BoundaryCondition {
        self.bottom = bottom;
        self
    }

    pub fn validate(&self, grid: &MacGrid) -> Result<()> {
        let periodic = |w: &WallCondition| matches!(w, WallCondition::Periodic);
        if periodic(&self.left) != grid.periodic_x() || periodic(&self.right) != grid.periodic_x() {
            return param("periodic lateral conditions must match the grid and come in pairs");
        }
        if periodic(&self.top) || periodic(&self.bottom) {
            return param("periodicity is only supported in x");
        }
        for w in [&self.top, &self.left, &self.right] {
            if let WallCondition::NavierSlip(_) = w {
                return param("Navier slip is only supported on the bottom edge");
            }
        }
        for w in [&self.bottom, &self.top, &self.left, &self.right] {
            if let WallCondition::Dirichlet { u, v } = w {
                if !u.is_finite() || !v.is_finite() {
                    return param("Dirichlet values must be finite");
                }
            }
        }
        if !self.solid.iter().all(|x| x.is_finite()) {
            return param("solid velocity must be finite");
        }
        if let WallCondition::NavierSlip(nodes) = &self.bottom {
            if nodes.len() != grid.nx() + 1 {
                return Err(Error::Conformance(format!(
                    "slip law has {} nodes, grid has {}",
                    nodes.len(),
                    grid.nx() + 1
                )));
            }
            for s in nodes {
                if let Slip::Robin(b) = s {
                    if !(*b >= 0.0 && b.is_finite()) {
                        return param(format!("slip coefficient must be finite and nonnegative, got {b}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Imposed normal velocity on a Dirichlet edge.
    pub(crate) fn normal_flux(&self, edge: Edge) -> f64 {
        match (edge, self.edge(edge)) {
            (Edge::Bottom | Edge::Top, WallCondition::Dirichlet { v, .. }) => *v,
            (Edge::Left | Edge::Right, WallCondition::Dirichlet { u, .. }) => *u,
            _ => 0.0,
        }
    }

    fn edge(&self, edge: Edge) -> &WallCondition {
        match edge {
            Edge::Bottom => &self.bottom,
            Edge::Top => &self.top,
            Edge::Left => &self.left,
            Edge::Right => &self.right,
        }
    }

    /// Boundary values implied by the condition: normal velocity on
    /// boundary faces and the tangential wall values. Navier-slip traces are
    /// left untouched (they depend on the solution).
    pub fn impose(&self, grid: &MacGrid, state: &mut FlowState) {
        let (nx, ny) = (grid.nx(), grid.ny());
        let kinds = FaceKinds::new(grid);
        for j in 0..ny {
            for i in 0..=nx {
                let k = j * (nx + 1) + i;
                if kinds.u[k] != FaceKind::Boundary {
                    continue;
                }
                state.u[k] = if i == 0 && !grid.periodic_x() && grid.is_fluid(0, j) {
                    self.normal_flux(Edge::Left)
                } else if i == nx && !grid.periodic_x() && grid.is_fluid(nx - 1, j) {
                    self.normal_flux(Edge::Right)
                } else {
                    self.solid[0]
                };
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let k = j * nx + i;
                if kinds.v[k] != FaceKind::Boundary {
                    continue;
                }
                state.v[k] = if j == 0 && grid.is_fluid(i, 0) {
                    self.normal_flux(Edge::Bottom)
                } else if j == ny && grid.is_fluid(i, ny - 1) {
                    self.normal_flux(Edge::Top)
                } else {
                    self.solid[1]
                };
            }
        }
        let tangential = |w: &WallCondition, comp: usize| match w {
            WallCondition::Dirichlet { u, v } => Some(if comp == 0 { *u } else { *v }),
            _ => None,
        };
        if let Some(t) = tangential(&self.bottom, 0) {
            state.walls.bottom.iter_mut().for_each(|x| *x = t);
        }
        if let Some(t) = tangential(&self.top, 0) {
            state.walls.top.iter_mut().for_each(|x| *x = t);
        }
        if let Some(t) = tangential(&self.left, 1) {
            state.walls.left.iter_mut().for_each(|x| *x = t);
        }
        if let Some(t) = tangential(&self.right, 1) {
            state.walls.right.iter_mut().for_each(|x| *x = t);
        }
        state.walls.solid = self.solid;
        if grid.periodic_x() {
            for j in 0..ny {
                state.u[j * (nx + 1) + nx] = state.u[j * (nx + 1)];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FaceKind {
    /// Both adjacent cells are fluid: an unknown.
    Interior,
    /// Exactly one adjacent cell is fluid: normal velocity is imposed.
    Boundary,
    /// No adjacent fluid cell, or the periodic duplicate `i = nx`.
    Inactive,
}

pub(crate) struct FaceKinds {
    pub u: Vec<FaceKind>,
    pub v: Vec<FaceKind>,
}

impl FaceKinds {
    pub fn new(grid: &MacGrid) -> FaceKinds {
        let (nx, ny) = (grid.nx(), grid.ny());
        let classify = |a: bool, b: bool| match (a, b) {
            (true, true) => FaceKind::Interior,
            (false, false) => FaceKind::Inactive,
            _ => FaceKind::Boundary,
        };
        let mut u = vec![FaceKind::Inactive; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                if grid.periodic_x() && i == nx {
                    continue;
                }
                let l = cell_at(grid, i as isize - 1, j as isize).is_some();
                let r = cell_at(grid, i as isize, j as isize).is_some();
                u[j * (nx + 1) + i] = classify(l, r);
            }
        }
        let mut v = vec![FaceKind::Inactive; nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                let b = cell_at(grid, i as isize, j as isize - 1).is_some();
                let t = cell_at(grid, i as isize, j as isize).is_some();
                v[j * nx + i] = classify(b, t);
            }
        }
        FaceKinds { u, v }
    }
}

/// Fluid cell at `(i, j)` with periodic wrapping in `x`; `None` when solid
/// or outside the grid.
pub(crate) fn cell_at(grid: &MacGrid, i: isize, j: isize) -> Option<(usize, usize)> {
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    if j < 0 || j >= ny {
        return None;
    }
    let i = if grid.periodic_x() {
        i.rem_euclid(nx)
    } else if i < 0 || i >= nx {
        return None;
    } else {
        i
    };
    let (i, j) = (i as usize, j as usize);
    grid.is_fluid(i, j).then_some((i, j))
}

/// `i` wrapped for periodic grids; `None` when outside a walled grid.
fn wrap_col(grid: &MacGrid, i: isize) -> Option<usize> {
    let nx = grid.nx() as isize;
    if grid.periodic_x() {
        Some(i.rem_euclid(nx) as usize)
    } else if i < 0 || i >= nx {
        None
    } else {
        Some(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Wall {
    Bottom(usize),
    Top(usize),
    Left(usize),
    Right(usize),
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum End {
    Face(usize),
    Wall(Wall),
}

/// Flux link from face `a` to `b` with conductance `c`; `width` is the
/// length of the wall segment for wall links.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Link {
    pub a: usize,
    pub b: End,
    pub c: f64,
    pub width: f64,
}

pub(crate) struct Stencil {
    pub kinds: FaceKinds,
    pub u_vol: Vec<f64>,
    pub v_vol: Vec<f64>,
    pub u_links: Vec<Link>,
    pub v_links: Vec<Link>,
}

/// Control-volume sizes of every face, clipped to fluid cells.
pub(crate) fn face_volumes(grid: &MacGrid) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut u_vol = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 0..=nx {
            if grid.periodic_x() && i == nx {
                continue;
            }
            let mut w = 0.0;
            if let Some((l, _)) = cell_at(grid, i as isize - 1, j as isize) {
                w += 0.5 * grid.dx(l);
            }
            if let Some((r, _)) = cell_at(grid, i as isize, j as isize) {
                w += 0.5 * grid.dx(r);
            }
            u_vol[j * (nx + 1) + i] = w * grid.dy(j);
        }
    }
    let mut v_vol = vec![0.0; nx * (ny + 1)];
    for j in 0..=ny {
        for i in 0..nx {
            let mut h = 0.0;
            if cell_at(grid, i as isize, j as isize - 1).is_some() {
                h += 0.5 * grid.dy(j - 1);
            }
            if cell_at(grid, i as isize, j as isize).is_some() {
                h += 0.5 * grid.dy(j);
            }
            v_vol[j * nx + i] = h * grid.dx(i);
        }
    }
    (u_vol, v_vol)
}

impl Stencil {
    pub fn new(grid: &MacGrid, visc: &ViscosityField) -> Result<Stencil> {
        visc.validate(grid)?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let kinds = FaceKinds::new(grid);
        let (u_vol, v_vol) = face_volumes(grid);
        let nu = |i: usize, j: usize| visc.at(grid, i, j);

        let mut u_links = Vec::new();
        for j in 0..ny {
            for i in 0..=nx {
                let p = j * (nx + 1) + i;
                if kinds.u[p] == FaceKind::Inactive {
                    continue;
                }
                let sides: Vec<usize> = [i as isize - 1, i as isize]
                    .into_iter()
                    .filter_map(|c| cell_at(grid, c, j as isize).map(|(c, _)| c))
                    .collect();
                if let Some((r, _)) = cell_at(grid, i as isize, j as isize) {
                    u_links.push(Link {
                        a: p,
                        b: End::Face(u_index(grid, i + 1, j)),
                        c: nu(r, j) * grid.dy(j) / grid.dx(r),
                        width: grid.dy(j),
                    });
                }
                let (mut pair, mut top, mut top_w, mut solid_n, mut solid_nw) = (0.0, 0.0, 0.0, 0.0, 0.0);
                let (mut bottom, mut bottom_w, mut solid_s, mut solid_sw) = (0.0, 0.0, 0.0, 0.0);
                for &s in &sides {
                    let half = 0.5 * grid.dx(s);
                    let wall_c = half * nu(s, j) / (0.5 * grid.dy(j));
                    if j + 1 == ny {
                        top += wall_c;
                        top_w += half;
                    } else if grid.is_fluid(s, j + 1) {
                        pair += half / (0.5 * grid.dy(j) / nu(s, j) + 0.5 * grid.dy(j + 1) / nu(s, j + 1));
                    } else {
                        solid_n += wall_c;
                        solid_nw += half;
                    }
                    if j == 0 {
                        bottom += wall_c;
                        bottom_w += half;
                    } else if !grid.is_fluid(s, j - 1) {
                        solid_s += wall_c;
                        solid_sw += half;
                    }
                }
                if pair > 0.0 {
                    u_links.push(Link {
                        a: p,
                        b: End::Face(u_index(grid, i, j + 1)),
                        c: pair,
                        width: 0.0,
                    });
                }
                for (c, w, wall) in [
                    (top, top_w, Wall::Top(i)),
                    (bottom, bottom_w, Wall::Bottom(i)),
                    (solid_n + solid_s, solid_nw + solid_sw, Wall::Solid),
                ] {
                    if c > 0.0 {
                        u_links.push(Link {
                            a: p,
                            b: End::Wall(wall),
                            c,
                            width: w,
                        });
                    }
                }
            }
        }

        let mut v_links = Vec::new();
        for j in 0..=ny {
            for i in 0..nx {
                let p = j * nx + i;
                if kinds.v[p] == FaceKind::Inactive {
                    continue;
                }
                if j < ny && grid.is_fluid(i, j) {
                    v_links.push(Link {
                        a: p,
                        b: End::Face(v_index(grid, i, j + 1)),
                        c: nu(i, j) * grid.dx(i) / grid.dy(j),
                        width: grid.dx(i),
                    });
                }
                let rows: Vec<usize> = [j as isize - 1, j as isize]
                    .into_iter()
                    .filter_map(|r| cell_at(grid, i as isize, r).map(|(_, r)| r))
                    .collect();
                let (mut pair, mut right, mut left, mut solid, mut solid_w) = (0.0, 0.0, 0.0, 0.0, 0.0);
                let (mut right_w, mut left_w) = (0.0, 0.0);
                for &r in &rows {
                    let half = 0.5 * grid.dy(r);
                    let wall_c = half * nu(i, r) / (0.5 * grid.dx(i));
                    match wrap_col(grid, i as isize + 1) {
                        None => {
                            right += wall_c;
                            right_w += half;
                        }
                        Some(e) if grid.is_fluid(e, r) => {
                            pair += half / (0.5 * grid.dx(i) / nu(i, r) + 0.5 * grid.dx(e) / nu(e, r));
                        }
                        Some(_) => {
                            solid += wall_c;
                            solid_w += half;
                        }
                    }
                    match wrap_col(grid, i as isize - 1) {
                        None => {
                            left += wall_c;
                            left_w += half;
                        }
                        Some(w) if grid.is_fluid(w, r) => {}
                        Some(_) => {
                            solid += wall_c;
                            solid_w += half;
                        }
                    }
                }
                if pair > 0.0 {
                    let e = wrap_col(grid, i as isize + 1).expect("pair implies a neighbour column");
                    v_links.push(Link {
                        a: p,
                        b: End::Face(v_index(grid, e, j)),
                        c: pair,
                        width: 0.0,
                    });
                }
                for (c, w, wall) in [
                    (right, right_w, Wall::Right(j)),
                    (left, left_w, Wall::Left(j)),
                    (solid, solid_w, Wall::Solid),
                ] {
                    if c > 0.0 {
                        v_links.push(Link {
                            a: p,
                            b: End::Wall(wall),
                            c,
                            width: w,
                        });
                    }
                }
            }
        }
        Ok(Stencil {
            kinds,
            u_vol,
            v_vol,
            u_links,
            v_links,
        })
    }
}

fn wall_value(walls: &WallValues, wall: Wall, comp: usize) -> f64 {
    match wall {
        Wall::Bottom(i) => walls.bottom[i],
        Wall::Top(i) => walls.top[i],
        Wall::Left(j) => walls.left[j],
        Wall::Right(j) => walls.right[j],
        Wall::Solid => walls.solid[comp],
    }
}

/// How a wall link enters the operator for a given boundary condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum WallTerm {
    Value(f64),
    Robin(f64),
}

pub(crate) fn wall_term(bc: &BoundaryCondition, wall: Wall, comp: usize) -> WallTerm {
    let dirichlet = |w: &WallCondition| match w {
        WallCondition::Dirichlet { u, v } => {
            if comp == 0 {
                *u
            } else {
                *v
            }
        }
        _ => 0.0,
    };
    match wall {
        Wall::Bottom(i) => match &bc.bottom {
            WallCondition::NavierSlip(nodes) => match nodes[i] {
                Slip::NoSlip => WallTerm::Value(0.0),
                Slip::Robin(b) => WallTerm::Robin(b),
            },
            w => WallTerm::Value(dirichlet(w)),
        },
        Wall::Top(_) => WallTerm::Value(dirichlet(&bc.top)),
        Wall::Left(_) => WallTerm::Value(dirichlet(&bc.left)),
        Wall::Right(_) => WallTerm::Value(dirichlet(&bc.right)),
        Wall::Solid => WallTerm::Value(bc.solid[comp]),
    }
}

/// Conductance of a half-cell link in series with a friction law.
pub(crate) fn robin_conductance(c: f64, beta: f64, width: f64) -> f64 {
    let bw = beta * width;
    if bw == 0.0 {
        0.0
    } else {
        c * bw / (c + bw)
    }
}

/// Cell divergence; zero on solid cells.
pub fn discrete_divergence(state: &FlowState, grid: &MacGrid) -> Result<Vec<f64>> {
    state.check(grid)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut d = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if !grid.is_fluid(i, j) {
                continue;
            }
            let flux = (state.u[u_index(grid, i + 1, j)] - state.u[u_index(grid, i, j)]) * grid.dy(j)
                + (state.v[v_index(grid, i, j + 1)] - state.v[v_index(grid, i, j)]) * grid.dx(i);
            d[j * nx + i] = flux / (grid.dx(i) * grid.dy(j));
        }
    }
    Ok(d)
}

/// `max |div u| / (1 + max |u|)`.
pub fn divergence_residual(state: &FlowState, grid: &MacGrid) -> Result<f64> {
    let d = discrete_divergence(state, grid)?;
    Ok(d.iter().fold(0.0, |a: f64, x| a.max(x.abs())) / (1.0 + state.max_abs_velocity()))
}

/// Pressure gradient on interior faces; zero on boundary and solid faces.
pub fn discrete_gradient(p: &[f64], grid: &MacGrid) -> Result<FaceField> {
    let (nx, ny) = (grid.nx(), grid.ny());
    if p.len() != nx * ny {
        return Err(Error::Conformance("pressure size does not match grid".into()));
    }
    let kinds = FaceKinds::new(grid);
    let mut g = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 0..=nx {
            let k = j * (nx + 1) + i;
            if kinds.u[k] != FaceKind::Interior {
                continue;
            }
            let l = wrap_col(grid, i as isize - 1).expect("interior face");
            let dist = 0.5 * (grid.dx(l) + grid.dx(i % nx));
            g.u[k] = (p[j * nx + i % nx] - p[j * nx + l]) / dist;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if kinds.v[k] != FaceKind::Interior {
                continue;
            }
            let dist = 0.5 * (grid.dy(j - 1) + grid.dy(j));
            g.v[k] = (p[j * nx + i] - p[(j - 1) * nx + i]) / dist;
        }
    }
    if grid.periodic_x() {
        for j in 0..ny {
            g.u[j * (nx + 1) + nx] = g.u[j * (nx + 1)];
        }
    }
    Ok(g)
}

/// `-div(visc grad u)` per unit volume on interior faces, with wall values
/// and slip laws taken from `bc` and boundary-face values from `state`.
pub fn viscous_operator(
    state: &FlowState,
    visc: &ViscosityField,
    bc: &BoundaryCondition,
    grid: &MacGrid,
) -> Result<FaceField> {
    state.check(grid)?;
    bc.validate(grid)?;
    let st = Stencil::new(grid, visc)?;
    let mut out = FaceField::zeros(grid);
    for (comp, links, kinds, vals, vols, res) in [
        (0, &st.u_links, &st.kinds.u, &state.u, &st.u_vol, &mut out.u),
        (1, &st.v_links, &st.kinds.v, &state.v, &st.v_vol, &mut out.v),
    ] {
        for l in links {
            match l.b {
                End::Face(b) => {
                    let flux = l.c * (vals[l.a] - vals[b]);
                    if kinds[l.a] == FaceKind::Interior {
                        res[l.a] += flux;
                    }
                    if kinds[b] == FaceKind::Interior {
                        res[b] -= flux;
                    }
                }
                End::Wall(w) => {
                    if kinds[l.a] != FaceKind::Interior {
                        continue;
                    }
                    res[l.a] += match wall_term(bc, w, comp) {
                        WallTerm::Value(g) => l.c * (vals[l.a] - g),
                        WallTerm::Robin(beta) => robin_conductance(l.c, beta, l.width) * vals[l.a],
                    };
                }
            }
        }
        for (k, r) in res.iter_mut().enumerate() {
            if kinds[k] == FaceKind::Interior {
                *r /= vols[k];
            } else {
                *r = 0.0;
            }
        }
    }
    if grid.periodic_x() {
        let nx = grid.nx();
        for j in 0..grid.ny() {
            out.u[j * (nx + 1) + nx] = out.u[j * (nx + 1)];
        }
    }
    Ok(out)
}

/// Midpoint quadrature of `int visc |grad u|^2` over the fluid region, using
/// the wall values stored in `state`.
pub fn dirichlet_energy(state: &FlowState, visc: &ViscosityField, grid: &MacGrid) -> Result<f64> {
    state.check(grid)?;
    let st = Stencil::new(grid, visc)?;
    Ok(energy_with(&st, state))
}

pub(crate) fn energy_with(st: &Stencil, state: &FlowState) -> f64 {
    bilinear_with(st, state, state)
}

/// Symmetric bilinear form behind [`dirichlet_energy`].
pub(crate) fn bilinear_with(st: &Stencil, a: &FlowState, b: &FlowState) -> f64 {
    let diff = |s: &FlowState, comp: usize, l: &Link| {
        let vals = if comp == 0 { &s.u } else { &s.v };
        let other = match l.b {
            End::Face(k) => vals[k],
            End::Wall(w) => wall_value(&s.walls, w, comp),
        };
        vals[l.a] - other
    };
    let mut e = 0.0;
    for (comp, links) in [(0, &st.u_links), (1, &st.v_links)] {
        for l in links {
            e += l.c * diff(a, comp, l) * diff(b, comp, l);
        }
    }
    e
}

/// `(a . grad) u` per unit volume on interior faces, in the skew-symmetric
/// conservative form: with control-volume fluxes `F` and neighbour values
/// `u_N`, the value at a face is `sum F u_N / (2 V)`. It is exactly
/// antisymmetric in the volume-weighted inner product.
pub fn advection_term(a: &FlowState, u: &FlowState, grid: &MacGrid) -> Result<FaceField> {
    a.check(grid)?;
    u.check(grid)?;
    Ok(advection_with(a, u, grid, false))
}

pub(crate) fn advection_with(a: &FlowState, u: &FlowState, grid: &MacGrid, drop_layer: bool) -> FaceField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let kinds = FaceKinds::new(grid);
    let (u_vol, v_vol) = face_volumes(grid);
    let mut out = FaceField::zeros(grid);
    let layer = |i: usize, j: usize| drop_layer && grid.cell(i, j) == CellKind::Layer;
    let ui = |i: usize, j: usize| u_index(grid, i, j);
    let vi = |i: usize, j: usize| v_index(grid, i, j);

    for j in 0..ny {
        for i in 0..=nx {
            let p = j * (nx + 1) + i;
            if kinds.u[p] != FaceKind::Interior {
                continue;
            }
            let l = wrap_col(grid, i as isize - 1).expect("interior face");
            let r = i % nx;
            if layer(l, j) || layer(r, j) {
                continue;
            }
            let lm = if i == 0 { nx - 1 } else { i - 1 };
            let mut acc = 0.5 * (a.u[p] + a.u[ui(i + 1, j)]) * grid.dy(j) * u.u[ui(i + 1, j)];
            acc -= 0.5 * (a.u[ui(lm, j)] + a.u[p]) * grid.dy(j) * u.u[ui(lm, j)];
            for s in [l, r] {
                let half = 0.5 * grid.dx(s);
                let up = if j + 1 < ny && grid.is_fluid(s, j + 1) {
                    u.u[ui(i, j + 1)]
                } else if j + 1 == ny {
                    u.walls.top[i]
                } else {
                    u.walls.solid[0]
                };
                acc += a.v[vi(s, j + 1)] * half * up;
                let down = if j > 0 && grid.is_fluid(s, j - 1) {
                    u.u[ui(i, j - 1)]
                } else if j == 0 {
                    u.walls.bottom[i]
                } else {
                    u.walls.solid[0]
                };
                acc -= a.v[vi(s, j)] * half * down;
            }
            out.u[p] = 0.5 * acc / u_vol[p];
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let p = j * nx + i;
            if kinds.v[p] != FaceKind::Interior || layer(i, j - 1) || layer(i, j) {
                continue;
            }
            let mut acc = 0.5 * (a.v[p] + a.v[vi(i, j + 1)]) * grid.dx(i) * u.v[vi(i, j + 1)];
            acc -= 0.5 * (a.v[vi(i, j - 1)] + a.v[p]) * grid.dx(i) * u.v[vi(i, j - 1)];
            for r in [j - 1, j] {
                let half = 0.5 * grid.dy(r);
                let east = match wrap_col(grid, i as isize + 1) {
                    None => u.walls.right[j],
                    Some(e) if grid.is_fluid(e, r) => u.v[vi(e, j)],
                    Some(_) => u.walls.solid[1],
                };
                acc += a.u[ui(i + 1, r)] * half * east;
                let west = match wrap_col(grid, i as isize - 1) {
                    None => u.walls.left[j],
                    Some(w) if grid.is_fluid(w, r) => u.v[vi(w, j)],
                    Some(_) => u.walls.solid[1],
                };
                acc -= a.u[ui(i, r)] * half * west;
            }
            out.v[p] = 0.5 * acc / v_vol[p];
        }
    }
    if grid.periodic_x() {
        for j in 0..ny {
            out.u[j * (nx + 1) + nx] = out.u[j * (nx + 1)];
        }
    }
    out
}

/// Quadrature of a trace `g` (one value per `x_faces` node) along the bottom edge.
pub fn boundary_integral(g: &[f64], grid: &MacGrid) -> Result<f64> {
    if g.is_empty() {
        return param("boundary integral over an empty edge");
    }
    if g.len() != grid.nx() + 1 {
        return Err(Error::Conformance(format!(
            "trace has {} values, edge has {} nodes",
            g.len(),
            grid.nx() + 1
        )));
    }
    Ok(grid.bottom_weights().iter().zip(g).map(|(w, x)| w * x).sum())
}

/// Volume-weighted inner product of two face fields over the fluid region.
pub fn face_inner(a: &FaceField, b: &FaceField, grid: &MacGrid) -> Result<f64> {
    a.check(grid)?;
    b.check(grid)?;
    let (u_vol, v_vol) = face_volumes(grid);
    let su: f64 = u_vol.iter().zip(&a.u).zip(&b.u).map(|((w, x), y)| w * x * y).sum();
    let sv: f64 = v_vol.iter().zip(&a.v).zip(&b.v).map(|((w, x), y)| w * x * y).sum();
    Ok(su + sv)
}

/// `int f . u` over the fluid region.
pub fn work(f: &FaceField, state: &FlowState, grid: &MacGrid) -> Result<f64> {
    face_inner(f, &state.velocity(), grid)
}

/// `L^2` norm of the velocity difference `a - b` over the fluid region.
pub fn velocity_l2_diff(a: &FlowState, b: &FlowState, grid: &MacGrid) -> Result<f64> {
    a.check(grid)?;
    b.check(grid)?;
    let d = FaceField {
        u: a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect(),
        v: a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect(),
    };
    Ok(face_inner(&d, &d, grid)?.sqrt())
}

pub fn velocity_l2(state: &FlowState, grid: &MacGrid) -> Result<f64> {
    let v = state.velocity();
    Ok(face_inner(&v, &v, grid)?.sqrt())
}

/// Area-weighted mean of a cell field over fluid cells.
pub fn fluid_mean(p: &[f64], grid: &MacGrid) -> f64 {
    let (mut s, mut a) = (0.0, 0.0);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if grid.is_fluid(i, j) {
                let w = grid.dx(i) * grid.dy(j);
                s += w * p[j * grid.nx() + i];
                a += w;
            }
        }
    }
    if a > 0.0 {
        s / a
    } else {
        0.0
    }
}

/// Shifts `p` to zero area-weighted mean over fluid cells; solid cells are set to zero.
pub fn remove_mean(p: &mut [f64], grid: &MacGrid) {
    let m = fluid_mean(p, grid);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = j * grid.nx() + i;
            p[k] = if grid.is_fluid(i, j) { p[k] - m } else { 0.0 };
        }
    }
}

/// `L^2 / R` distance between two pressures on the same grid.
pub fn pressure_l2_diff(a: &[f64], b: &[f64], grid: &MacGrid) -> Result<f64> {
    if a.len() != grid.nx() * grid.ny() || b.len() != a.len() {
        return Err(Error::Conformance("pressure size does not match grid".into()));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    remove_mean(&mut d, grid);
    let mut s = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = j * grid.nx() + i;
            s += grid.dx(i) * grid.dy(j) * d[k] * d[k];
        }
    }
    Ok(s.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cell_domain, build_domain_grid, DomainSpec, Lateral, Profile};
    use std::f64::consts::PI;

    fn square(n: usize) -> MacGrid {
        build_domain_grid(&DomainSpec::new(1.0, Lateral::Walls).unwrap(), n, n, 1.0).unwrap()
    }

    fn interior_max(f: &[f64], kinds: &[FaceKind]) -> f64 {
        f.iter()
            .zip(kinds)
            .filter(|(_, k)| **k == FaceKind::Interior)
            .fold(0.0, |m, (x, _)| m.max(x.abs()))
    }

    #[test]
    fn divergence_of_constant_and_linear_fields() {
        let g = square(16);
        for f in [|_: f64, _: f64| (1.0, 0.0), |x: f64, y: f64| (x, -y)] {
            let s = FlowState::from_fn(&g, f);
            let d = discrete_divergence(&s, &g).unwrap();
            assert!(d.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn divergence_is_second_order() {
        let err = |n: usize| {
            let g = build_domain_grid(&DomainSpec::new(1.0, Lateral::Walls).unwrap(), n, n, 3.0).unwrap();
            let s = FlowState::from_fn(&g, |x, _| (x * x, 0.0));
            let d = discrete_divergence(&s, &g).unwrap();
            (0..n * n)
                .map(|k| (d[k] - 2.0 * g.xc(k % n)).abs())
                .fold(0.0, f64::max)
        };
        // x^2 differences are exact at cell centres
        assert!(err(16) < 1e-12 && err(32) < 1e-12);
    }

    #[test]
    fn gradient_of_linear_pressure() {
        let g = square(16);
        let p: Vec<f64> = (0..256).map(|k| g.xc(k % 16)).collect();
        let gr = discrete_gradient(&p, &g).unwrap();
        let kinds = FaceKinds::new(&g);
        for (k, kind) in kinds.u.iter().enumerate() {
            if *kind == FaceKind::Interior {
                assert!((gr.u[k] - 1.0).abs() < 1e-12);
            }
        }
        assert!(gr.v.iter().all(|x| x.abs() < 1e-12));
        let c = discrete_gradient(&vec![3.0; 256], &g).unwrap();
        assert!(c.max_abs() < 1e-12);
    }

    #[test]
    fn viscous_operator_on_sine() {
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let g = square(n);
                let f = |x: f64, y: f64| ((PI * x).sin() * (PI * y).sin(), 0.0);
                let s = FlowState::from_fn(&g, f);
                let visc = ViscosityField::uniform(&g, 1.0);
                let a = viscous_operator(&s, &visc, &BoundaryCondition::no_slip(&g), &g).unwrap();
                let kinds = FaceKinds::new(&g);
                let mut e = 0.0f64;
                for j in 0..n {
                    for i in 1..n {
                        let k = j * (n + 1) + i;
                        if kinds.u[k] == FaceKind::Interior && j > 0 && j + 1 < n {
                            e = e.max((a.u[k] - 2.0 * PI * PI * s.u[k]).abs());
                        }
                    }
                }
                e
            })
            .collect();
        assert!(errs[0] < 0.1, "{errs:?}");
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    }

    #[test]
    fn viscous_operator_kills_linear_fields() {
        let g = square(12);
        let s = FlowState::from_fn(&g, |x, y| (1.0 + 2.0 * x - y, 3.0 * x + y));
        let visc = ViscosityField::uniform(&g, 1.7);
        let bc = BoundaryCondition::no_slip(&g);
        let a = viscous_operator(&s, &visc, &bc, &g).unwrap();
        let kinds = FaceKinds::new(&g);
        // only faces away from the walls see the linear field alone
        for j in 1..11 {
            for i in 2..11 {
                assert!(a.u[j * 13 + i].abs() < 1e-9, "{}", a.u[j * 13 + i]);
            }
        }
        for j in 2..11 {
            for i in 1..11 {
                assert!(a.v[j * 12 + i].abs() < 1e-9);
            }
        }
        assert!(interior_max(&a.u, &kinds.u).is_finite());
    }

    #[test]
    fn energy_of_shear_flow() {
        for n in [16, 32] {
            let g = square(n);
            let s = FlowState::from_fn(&g, |_, y| (y, 0.0));
            let e = dirichlet_energy(&s, &ViscosityField::uniform(&g, 1.0), &g).unwrap();
            assert!((e - 1.0).abs() < 1e-10, "{e}");
            let e2 = dirichlet_energy(&s, &ViscosityField::uniform(&g, 2.0), &g).unwrap();
            assert_eq!(e2, 2.0 * e);
        }
        let g = square(8);
        assert_eq!(dirichlet_energy(&FlowState::zeros(&g), &ViscosityField::uniform(&g, 1.0), &g).unwrap(), 0.0);
    }

    #[test]
    fn advection_of_linear_field() {
        let g = square(16);
        let a = FlowState::from_fn(&g, |_, _| (1.0, 0.0));
        let u = FlowState::from_fn(&g, |x, _| (x, 0.0));
        let n = advection_term(&a, &u, &g).unwrap();
        let kinds = FaceKinds::new(&g);
        for (k, kind) in kinds.u.iter().enumerate() {
            if *kind == FaceKind::Interior {
                assert!((n.u[k] - 1.0).abs() < 1e-12);
            }
        }
        assert!(n.v.iter().all(|x| x.abs() < 1e-12));
        let zero = advection_term(&FlowState::zeros(&g), &u, &g).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn boundary_integrals() {
        let g = square(16);
        assert!((boundary_integral(&vec![1.0; 17], &g).unwrap() - 1.0).abs() < 1e-15);
        assert!((boundary_integral(&vec![2.5; 17], &g).unwrap() - 2.5).abs() < 1e-15);
        let x: Vec<f64> = g.x_faces().to_vec();
        assert!((boundary_integral(&x, &g).unwrap() - 0.5).abs() < 1e-14);
        assert!(boundary_integral(&[], &g).is_err());
    }

    #[test]
    fn cell_domain_stencil_is_consistent() {
        let g = build_cell_domain(&Profile::parse("tent:0.5").unwrap(), 16, 16).unwrap();
        let st = Stencil::new(&g, &ViscosityField::uniform(&g, 1.0)).unwrap();
        assert!(st.u_links.iter().all(|l| l.c > 0.0));
        assert!(st.v_links.iter().all(|l| l.c > 0.0));
    }

    #[test]
    fn rejects_bad_viscosity() {
        let g = square(8);
        let mut visc = ViscosityField::uniform(&g, 1.0);
        visc.values[5] = 0.0;
        let s = FlowState::zeros(&g);
        assert!(matches!(
            viscous_operator(&s, &visc, &BoundaryCondition::no_slip(&g), &g),
            Err(Error::Parameter(_))
        ));
        let bad = FlowState {
            p: vec![],
            ..FlowState::zeros(&g)
        };
        assert!(matches!(discrete_divergence(&bad, &g), Err(Error::Conformance(_))));
    }
}
