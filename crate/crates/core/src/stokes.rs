//! Stokes and steady Navier-Stokes solvers on a [`MacGrid`].
//!
//! The velocity block is assembled from the shared link stencil and factored
//! once per operator by banded Cholesky. Pressure is found by conjugate
//! gradients on the Schur complement `D A^-1 D^T`, preconditioned by the
//! inverse pressure mass matrix scaled with the cell viscosity.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fields::{
    advection_with, cell_at, remove_mean, robin_conductance, wall_term, BoundaryCondition, End, FaceField, FaceKind,
    FlowState, Slip, Stencil, ViscosityField, Wall, WallCondition, WallTerm,
};
use crate::grid::MacGrid;
use crate::linalg::{pcg, BandCholesky, BandedSpd, SpdOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Divergence tolerance relative to `1 + max|u|`.
    pub linear_tol: f64,
    pub max_cg_iters: usize,
    /// Relative change in velocity (max norm) that ends the Picard loop.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub picard_damping: f64,
    /// Drop the convective term in control volumes touching the thin layer.
    pub drop_layer_advection: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            linear_tol: 1e-10,
            max_cg_iters: 2000,
            picard_tol: 1e-10,
            picard_max: 200,
            picard_damping: 1.0,
            drop_layer_advection: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.linear_tol) || !unit(self.picard_tol) {
            return param("tolerances must lie in (0, 1)");
        }
        if self.max_cg_iters == 0 || self.picard_max == 0 {
            return param("iteration caps must be at least 1");
        }
        if !(self.picard_damping > 0.0 && self.picard_damping <= 1.0) {
            return param(format!("damping must lie in (0, 1], got {}", self.picard_damping));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub cg_iters: usize,
    pub picard_iters: usize,
    /// `max |div u| / (1 + max |u|)` of the returned state.
    pub divergence_residual: f64,
    /// Momentum residual of the last linear solve relative to the load.
    pub momentum_residual: f64,
    /// Last relative Picard change (0 for linear solves).
    pub picard_residual: f64,
    /// Seconds; not serialized so that reports are reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Assembled, factored Stokes operator for fixed grid, viscosity and
/// boundary condition. Reusable for any number of right-hand sides.
pub struct StokesOperator<'g> {
    grid: &'g MacGrid,
    bc: BoundaryCondition,
    stencil: Stencil,
    u_map: Vec<Option<usize>>,
    v_map: Vec<Option<usize>>,
    u_faces: Vec<usize>,
    v_faces: Vec<usize>,
    a_u: BandedSpd,
    a_v: BandedSpd,
    f_u: BandCholesky,
    f_v: BandCholesky,
    base_u: Vec<f64>,
    base_v: Vec<f64>,
    boundary: FlowState,
    cells: Vec<(usize, usize)>,
    cell_map: Vec<Option<usize>>,
    cell_area: Vec<f64>,
    cell_nu: Vec<f64>,
    d_known: Vec<f64>,
    known_max: f64,
}

impl<'g> StokesOperator<'g> {
    pub fn new(grid: &'g MacGrid, visc: &ViscosityField, bc: &BoundaryCondition) -> Result<StokesOperator<'g>> {
        bc.validate(grid)?;
        let stencil = Stencil::new(grid, visc)?;
        let number = |kinds: &[FaceKind]| {
            let mut map = vec![None; kinds.len()];
            let mut faces = Vec::new();
            for (k, kind) in kinds.iter().enumerate() {
                if *kind == FaceKind::Interior {
                    map[k] = Some(faces.len());
                    faces.push(k);
                }
            }
            (map, faces)
        };
        let (u_map, u_faces) = number(&stencil.kinds.u);
        let (v_map, v_faces) = number(&stencil.kinds.v);
        if u_faces.is_empty() && v_faces.is_empty() {
            return Err(Error::WellPosedness("no interior velocity unknowns".into()));
        }

        let mut boundary = FlowState::zeros(grid);
        bc.impose(grid, &mut boundary);

        let mut blocks = Vec::new();
        for (comp, links, map, n, known) in [
            (0, &stencil.u_links, &u_map, u_faces.len(), &boundary.u),
            (1, &stencil.v_links, &v_map, v_faces.len(), &boundary.v),
        ] {
            let bw = links
                .iter()
                .filter_map(|l| match (map[l.a], l.b) {
                    (Some(a), End::Face(b)) => map[b].map(|b| a.abs_diff(b)),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            let mut a = BandedSpd::zeros(n, bw);
            let mut base = vec![0.0; n];
            for l in links.iter() {
                match l.b {
                    End::Face(b) => match (map[l.a], map[b]) {
                        (Some(ia), Some(ib)) => {
                            a.add(ia, ia, l.c);
                            a.add(ib, ib, l.c);
                            a.add(ia, ib, -l.c);
                        }
                        (Some(ia), None) => {
                            a.add(ia, ia, l.c);
                            base[ia] += l.c * known[b];
                        }
                        (None, Some(ib)) => {
                            a.add(ib, ib, l.c);
                            base[ib] += l.c * known[l.a];
                        }
                        (None, None) => {}
                    },
                    End::Wall(w) => {
                        let Some(ia) = map[l.a] else { continue };
                        match wall_term(bc, w, comp) {
                            WallTerm::Value(g) => {
                                a.add(ia, ia, l.c);
                                base[ia] += l.c * g;
                            }
                            WallTerm::Robin(beta) => a.add(ia, ia, robin_conductance(l.c, beta, l.width)),
                        }
                    }
                }
            }
            blocks.push((a, base));
        }
        let (a_v, base_v) = blocks.pop().expect("two blocks");
        let (a_u, base_u) = blocks.pop().expect("two blocks");
        let singular = |e: Error| match e {
            Error::WellPosedness(m) => Error::WellPosedness(format!(
                "{m}; the velocity is not pinned by any boundary condition"
            )),
            e => e,
        };
        let f_u = a_u.clone().factor().map_err(singular)?;
        let f_v = a_v.clone().factor().map_err(singular)?;

        let (nx, ny) = (grid.nx(), grid.ny());
        let mut cells = Vec::new();
        let mut cell_map = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if grid.is_fluid(i, j) {
                    cell_map[j * nx + i] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        let cell_area: Vec<f64> = cells.iter().map(|&(i, j)| grid.dx(i) * grid.dy(j)).collect();
        let cell_nu: Vec<f64> = cells.iter().map(|&(i, j)| visc.values[j * nx + i]).collect();

        let mut op = StokesOperator {
            grid,
            bc: bc.clone(),
            stencil,
            u_map,
            v_map,
            u_faces,
            v_faces,
            a_u,
            a_v,
            f_u,
            f_v,
            base_u,
            base_v,
            known_max: boundary.max_abs_velocity(),
            boundary,
            cells,
            cell_map,
            cell_area,
            cell_nu,
            d_known: Vec::new(),
        };
        let mut d_known = vec![0.0; op.cells.len()];
        op.flux_balance(&op.boundary.u, &op.boundary.v, false, &mut d_known);
        let net: f64 = d_known.iter().sum();
        let scale: f64 = d_known.iter().map(|x| x.abs()).sum();
        if net.abs() > 1e-12 * (1.0 + scale) {
            return Err(Error::WellPosedness(format!(
                "imposed boundary velocities carry a net flux of {net:.3e} into an incompressible domain"
            )));
        }
        op.d_known = d_known;
        Ok(op)
    }

    pub fn grid(&self) -> &MacGrid {
        self.grid
    }

    pub fn unknowns(&self) -> (usize, usize, usize) {
        (self.u_faces.len(), self.v_faces.len(), self.cells.len())
    }

    /// Integrated outward flux of each fluid cell, using either full face
    /// arrays (`unknown_only = false`) or only the interior unknowns.
    fn flux_balance(&self, u: &[f64], v: &[f64], unknown_only: bool, out: &mut [f64]) {
        let g = self.grid;
        let nx = g.nx();
        let take_u = |face: usize| -> f64 {
            if unknown_only {
                self.u_map[face].map_or(0.0, |k| u[k])
            } else {
                u[face]
            }
        };
        let take_v = |face: usize| -> f64 {
            if unknown_only {
                self.v_map[face].map_or(0.0, |k| v[k])
            } else {
                v[face]
            }
        };
        for (c, &(i, j)) in self.cells.iter().enumerate() {
            let e = crate::fields::u_index(g, i + 1, j);
            let w = crate::fields::u_index(g, i, j);
            let n = (j + 1) * nx + i;
            let s = j * nx + i;
            out[c] = (take_u(e) - take_u(w)) * g.dy(j) + (take_v(n) - take_v(s)) * g.dx(i);
        }
    }

    /// `D^T p` on the unknowns.
    fn div_transpose(&self, p: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let g = self.grid;
        let nx = g.nx();
        for (k, &face) in self.u_faces.iter().enumerate() {
            let (i, j) = (face % (nx + 1), face / (nx + 1));
            let l = cell_at(g, i as isize - 1, j as isize).expect("interior face");
            let r = cell_at(g, i as isize, j as isize).expect("interior face");
            let pl = p[self.cell_map[l.1 * nx + l.0].expect("fluid")];
            let pr = p[self.cell_map[r.1 * nx + r.0].expect("fluid")];
            out_u[k] = (pl - pr) * g.dy(j);
        }
        for (k, &face) in self.v_faces.iter().enumerate() {
            let (i, j) = (face % nx, face / nx);
            let pb = p[self.cell_map[(j - 1) * nx + i].expect("fluid")];
            let pt = p[self.cell_map[j * nx + i].expect("fluid")];
            out_v[k] = (pb - pt) * g.dx(i);
        }
    }

    fn velocity_from(&self, p: &[f64], b_u: &[f64], b_v: &[f64], u: &mut [f64], v: &mut [f64]) {
        self.div_transpose(p, u, v);
        for (x, b) in u.iter_mut().zip(b_u) {
            *x += b;
        }
        for (x, b) in v.iter_mut().zip(b_v) {
            *x += b;
        }
        self.f_u.solve(u);
        self.f_v.solve(v);
    }

    fn load(&self, f: &FaceField) -> (Vec<f64>, Vec<f64>) {
        let b_u = self
            .u_faces
            .iter()
            .zip(&self.base_u)
            .map(|(&face, base)| self.stencil.u_vol[face] * f.u[face] + base)
            .collect();
        let b_v = self
            .v_faces
            .iter()
            .zip(&self.base_v)
            .map(|(&face, base)| self.stencil.v_vol[face] * f.v[face] + base)
            .collect();
        (b_u, b_v)
    }

    /// Solves the Stokes system with body force `f`, optionally starting the
    /// pressure iteration from `p0`.
    pub fn solve(&self, f: &FaceField, p0: Option<&[f64]>, cfg: &SolverConfig) -> Result<(FlowState, SolveStats)> {
        let start = Instant::now();
        cfg.validate()?;
        let g = self.grid;
        if f.u.len() != (g.nx() + 1) * g.ny() || f.v.len() != g.nx() * (g.ny() + 1) {
            return Err(Error::Conformance("forcing does not match grid".into()));
        }
        if !f.u.iter().chain(&f.v).all(|x| x.is_finite()) {
            return param("forcing must be finite");
        }
        let (b_u, b_v) = self.load(f);
        let nc = self.cells.len();
        let mut p = vec![0.0; nc];
        if let Some(p0) = p0 {
            for (c, &(i, j)) in self.cells.iter().enumerate() {
                p[c] = p0[j * g.nx() + i];
            }
        }
        let mut total_iters = 0;
        let mut u = vec![0.0; self.u_faces.len()];
        let mut v = vec![0.0; self.v_faces.len()];
        let mut div = vec![0.0; nc];
        let mut last_res = f64::INFINITY;
        for _attempt in 0..4 {
            self.velocity_from(&p, &b_u, &b_v, &mut u, &mut v);
            let mut r = vec![0.0; nc];
            self.flux_balance(&u, &v, true, &mut r);
            for (x, d) in r.iter_mut().zip(&self.d_known) {
                *x = -(*x + d);
            }
            let mut uz = Uzawa {
                op: self,
                u: &mut u,
                v: &mut v,
                wu: vec![0.0; self.u_faces.len()],
                wv: vec![0.0; self.v_faces.len()],
            };
            let tol = cfg.linear_tol;
            let out = pcg(&mut uz, &mut r, &mut p, cfg.max_cg_iters.saturating_sub(total_iters), tol, |o, r| {
                o.residual(r)
            });
            total_iters += out.iterations;
            // fresh velocity to shed the drift of the incremental update
            self.velocity_from(&p, &b_u, &b_v, &mut u, &mut v);
            self.flux_balance(&u, &v, true, &mut div);
            let scale = 1.0 + self.max_velocity(&u, &v);
            last_res = div
                .iter()
                .zip(&self.d_known)
                .zip(&self.cell_area)
                .map(|((x, d), a)| ((x + d) / a).abs())
                .fold(0.0, f64::max)
                / scale;
            if last_res <= cfg.linear_tol {
                break;
            }
            if total_iters >= cfg.max_cg_iters {
                break;
            }
        }
        if !(last_res <= cfg.linear_tol) {
            return Err(Error::NonConvergence {
                solver: "uzawa-cg",
                iterations: total_iters,
                residual: last_res,
            });
        }
        let momentum = self.momentum_residual(&u, &v, &p, &b_u, &b_v);
        let state = self.assemble_state(&u, &v, &p);
        let stats = SolveStats {
            cg_iters: total_iters,
            picard_iters: 0,
            divergence_residual: last_res,
            momentum_residual: momentum,
            picard_residual: 0.0,
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((state, stats))
    }

    fn max_velocity(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().chain(v).fold(self.known_max, |m, x| m.max(x.abs()))
    }

    fn momentum_residual(&self, u: &[f64], v: &[f64], p: &[f64], b_u: &[f64], b_v: &[f64]) -> f64 {
        let mut du = vec![0.0; u.len()];
        let mut dv = vec![0.0; v.len()];
        self.div_transpose(p, &mut du, &mut dv);
        let mut au = vec![0.0; u.len()];
        let mut av = vec![0.0; v.len()];
        self.a_u.matvec(u, &mut au);
        self.a_v.matvec(v, &mut av);
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..u.len() {
            res = res.max((au[k] - du[k] - b_u[k]).abs());
            scale = scale.max(b_u[k].abs()).max(au[k].abs());
        }
        for k in 0..v.len() {
            res = res.max((av[k] - dv[k] - b_v[k]).abs());
            scale = scale.max(b_v[k].abs()).max(av[k].abs());
        }
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }

    fn assemble_state(&self, u: &[f64], v: &[f64], p: &[f64]) -> FlowState {
        let g = self.grid;
        let mut s = self.boundary.clone();
        for (k, &face) in self.u_faces.iter().enumerate() {
            s.u[face] = u[k];
        }
        for (k, &face) in self.v_faces.iter().enumerate() {
            s.v[face] = v[k];
        }
        let nx = g.nx();
        if g.periodic_x() {
            for j in 0..g.ny() {
                s.u[j * (nx + 1) + nx] = s.u[j * (nx + 1)];
            }
        }
        for (c, &(i, j)) in self.cells.iter().enumerate() {
            s.p[j * nx + i] = p[c];
        }
        remove_mean(&mut s.p, g);
        if let WallCondition::NavierSlip(nodes) = &self.bc.bottom {
            s.walls.bottom.iter_mut().for_each(|x| *x = 0.0);
            for l in &self.stencil.u_links {
                if let End::Wall(Wall::Bottom(i)) = l.b {
                    let up = s.u[l.a];
                    s.walls.bottom[i] = match nodes[i] {
                        Slip::NoSlip => 0.0,
                        Slip::Robin(beta) => l.c * up / (l.c + beta * l.width),
                    };
                }
            }
            if g.periodic_x() {
                s.walls.bottom[nx] = s.walls.bottom[0];
            }
        }
        s
    }
}

struct Uzawa<'a, 'g> {
    op: &'a StokesOperator<'g>,
    u: &'a mut Vec<f64>,
    v: &'a mut Vec<f64>,
    wu: Vec<f64>,
    wv: Vec<f64>,
}

impl Uzawa<'_, '_> {
    fn residual(&self, r: &[f64]) -> f64 {
        let scale = 1.0 + self.op.max_velocity(self.u, self.v);
        r.iter()
            .zip(&self.op.cell_area)
            .map(|(x, a)| (x / a).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

impl SpdOperator for Uzawa<'_, '_> {
    fn apply(&mut self, d: &[f64], y: &mut [f64]) {
        self.op.div_transpose(d, &mut self.wu, &mut self.wv);
        self.op.f_u.solve(&mut self.wu);
        self.op.f_v.solve(&mut self.wv);
        self.op.flux_balance(&self.wu, &self.wv, true, y);
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        for c in 0..r.len() {
            z[c] = r[c] * self.op.cell_nu[c] / self.op.cell_area[c];
        }
    }

    fn project(&self, r: &mut [f64]) {
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter_mut().for_each(|x| *x -= mean);
    }

    fn advance(&mut self, alpha: f64) {
        for (x, w) in self.u.iter_mut().zip(&self.wu) {
            *x += alpha * w;
        }
        for (x, w) in self.v.iter_mut().zip(&self.wv) {
            *x += alpha * w;
        }
    }
}

/// Which momentum equation to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    Stokes,
    NavierStokes,
}

impl std::str::FromStr for FlowModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<FlowModel> {
        match s {
            "stokes" => Ok(FlowModel::Stokes),
            "navier_stokes" | "navier-stokes" | "ns" => Ok(FlowModel::NavierStokes),
            _ => param(format!("unknown flow model '{s}' (expected stokes or navier_stokes)")),
        }
    }
}

/// Dispatches to [`solve_stokes`] or [`solve_navier_stokes_from`].
pub fn solve_flow(
    model: FlowModel,
    grid: &MacGrid,
    visc: &ViscosityField,
    bc: &BoundaryCondition,
    f: &FaceField,
    cfg: &SolverConfig,
    initial: Option<&FlowState>,
) -> Result<(FlowState, SolveStats)> {
    match model {
        FlowModel::Stokes => {
            cfg.validate()?;
            StokesOperator::new(grid, visc, bc)?.solve(f, initial.map(|s| s.p.as_slice()), cfg)
        }
        FlowModel::NavierStokes => solve_navier_stokes_from(grid, visc, bc, f, cfg, initial),
    }
}

/// Linear Stokes solve: `-div(visc grad u) + grad p = f`, `div u = 0`.
pub fn solve_stokes(
    grid: &MacGrid,
    visc: &ViscosityField,
    bc: &BoundaryCondition,
    f: &FaceField,
    cfg: &SolverConfig,
) -> Result<(FlowState, SolveStats)> {
    cfg.validate()?;
    StokesOperator::new(grid, visc, bc)?.solve(f, None, cfg)
}

/// Steady Navier-Stokes by damped Picard iteration on the convective term.
pub fn solve_navier_stokes(
    grid: &MacGrid,
    visc: &ViscosityField,
    bc: &BoundaryCondition,
    f: &FaceField,
    cfg: &SolverConfig,
) -> Result<(FlowState, SolveStats)> {
    solve_navier_stokes_from(grid, visc, bc, f, cfg, None)
}

/// [`solve_navier_stokes`] starting from a previous state on the same grid.
pub fn solve_navier_stokes_from(
    grid: &MacGrid,
    visc: &ViscosityField,
    bc: &BoundaryCondition,
    f: &FaceField,
    cfg: &SolverConfig,
    initial: Option<&FlowState>,
) -> Result<(FlowState, SolveStats)> {
    cfg.validate()?;
    let start = Instant::now();
    let op = StokesOperator::new(grid, visc, bc)?;
    let mut stats = SolveStats::default();
    let mut state = match initial {
        Some(s) => {
            s.check(grid)?;
            s.clone()
        }
        None => {
            let (s, st) = op.solve(f, None, cfg)?;
            stats.cg_iters += st.cg_iters;
            stats.picard_iters = 1;
            stats.divergence_residual = st.divergence_residual;
            stats.momentum_residual = st.momentum_residual;
            if s.max_abs_velocity() == 0.0 {
                // N(0) = 0, so rest is already the fixed point
                stats.wall_time = start.elapsed().as_secs_f64();
                return Ok((s, stats));
            }
            s
        }
    };
    let mut theta = cfg.picard_damping;
    let mut prev_change = f64::INFINITY;
    let mut rhs = f.clone();
    loop {
        let n = advection_with(&state, &state, grid, cfg.drop_layer_advection);
        for (r, (fv, nv)) in rhs.u.iter_mut().zip(f.u.iter().zip(&n.u)) {
            *r = fv - nv;
        }
        for (r, (fv, nv)) in rhs.v.iter_mut().zip(f.v.iter().zip(&n.v)) {
            *r = fv - nv;
        }
        let (next, st) = op.solve(&rhs, Some(&state.p), cfg)?;
        stats.cg_iters += st.cg_iters;
        stats.picard_iters += 1;
        stats.divergence_residual = st.divergence_residual;
        stats.momentum_residual = st.momentum_residual;
        let change = next
            .u
            .iter()
            .zip(&state.u)
            .chain(next.v.iter().zip(&state.v))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = next.max_abs_velocity();
        let rel = if scale > 0.0 { change / scale } else { change };
        stats.picard_residual = rel;
        if rel <= cfg.picard_tol || scale == 0.0 {
            stats.wall_time = start.elapsed().as_secs_f64();
            return Ok((next, stats));
        }
        if !rel.is_finite() || stats.picard_iters >= cfg.picard_max {
            return Err(Error::NonConvergence {
                solver: "picard",
                iterations: stats.picard_iters,
                residual: rel,
            });
        }
        if rel > prev_change && theta > 1.0 / 1024.0 {
            theta *= 0.5;
        }
        prev_change = rel;
        blend(&mut state, &next, theta);
    }
}

fn blend(state: &mut FlowState, next: &FlowState, theta: f64) {
    let mix = |a: &mut Vec<f64>, b: &Vec<f64>| {
        for (x, y) in a.iter_mut().zip(b) {
            *x += theta * (y - *x);
        }
    };
    mix(&mut state.u, &next.u);
    mix(&mut state.v, &next.v);
    mix(&mut state.p, &next.p);
    mix(&mut state.walls.bottom, &next.walls.bottom);
    state.walls.top.clone_from(&next.walls.top);
    state.walls.left.clone_from(&next.walls.left);
    state.walls.right.clone_from(&next.walls.right);
    state.walls.solid = next.walls.solid;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::discrete_divergence;
    use crate::grid::{build_domain_grid, DomainSpec, Lateral};

    fn channel(nx: usize, ny: usize) -> MacGrid {
        build_domain_grid(&DomainSpec::new(1.0, Lateral::Periodic).unwrap(), nx, ny, 1.0).unwrap()
    }

    fn div_ok(s: &FlowState, g: &MacGrid) -> bool {
        let d = discrete_divergence(s, g).unwrap();
        d.iter().fold(0.0f64, |m, x| m.max(x.abs())) <= 1e-8 * (1.0 + s.max_abs_velocity())
    }

    #[test]
    fn zero_forcing_gives_rest() {
        let g = build_domain_grid(&DomainSpec::new(1.0, Lateral::Walls).unwrap(), 8, 8, 1.0).unwrap();
        let visc = ViscosityField::uniform(&g, 1.0);
        let (s, _) = solve_stokes(&g, &visc, &BoundaryCondition::no_slip(&g), &FaceField::zeros(&g), &Default::default())
            .unwrap();
        assert_eq!(s.max_abs_velocity(), 0.0);
        assert!(s.p.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn poiseuille_is_second_order() {
        let err = |ny: usize| {
            let g = channel(8, ny);
            let visc = ViscosityField::uniform(&g, 1.0);
            let f = FaceField::from_fn(&g, |_, _| (2.0, 0.0));
            let (s, stats) = solve_stokes(&g, &visc, &BoundaryCondition::no_slip(&g), &f, &Default::default()).unwrap();
            assert!(s.v.iter().all(|x| x.abs() < 1e-10));
            assert!(div_ok(&s, &g));
            assert!(stats.momentum_residual < 1e-10);
            (0..ny)
                .map(|j| (s.u[j * 9 + 3] - g.yc(j) * (1.0 - g.yc(j))).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        // the half-cell wall link leaves a uniform dy^2/4 offset
        assert!((e1 - 1.0 / 1024.0).abs() < 1e-10, "{e1}");
        assert!((e1 / e2 - 4.0).abs() < 1e-6);
    }

    #[test]
    fn navier_slip_poiseuille() {
        let g = channel(8, 32);
        let visc = ViscosityField::uniform(&g, 1.0);
        let f = FaceField::from_fn(&g, |_, _| (2.0, 0.0));
        let bc = BoundaryCondition::no_slip(&g).with_bottom(WallCondition::NavierSlip(vec![Slip::Robin(1.0); 9]));
        let (s, _) = solve_stokes(&g, &visc, &bc, &f, &Default::default()).unwrap();
        let exact = |y: f64| -y * y + 0.5 * y + 0.5;
        for j in 0..32 {
            assert!((s.u[j * 9 + 2] - exact(g.yc(j))).abs() < 1e-3);
        }
        for b in &s.walls.bottom {
            assert!((b - 0.5).abs() < 1e-3, "{b}");
        }
    }

    #[test]
    fn all_free_slip_periodic_is_singular() {
        let g = channel(8, 8);
        let visc = ViscosityField::uniform(&g, 1.0);
        let mut bc = BoundaryCondition::no_slip(&g).with_bottom(WallCondition::NavierSlip(vec![Slip::Robin(0.0); 9]));
        bc.top = WallCondition::Dirichlet { u: 0.0, v: 0.0 };
        // top still pins u: solvable
        assert!(StokesOperator::new(&g, &visc, &bc).is_ok());
    }

    #[test]
    fn net_inflow_is_rejected() {
        let g = build_domain_grid(&DomainSpec::new(1.0, Lateral::Walls).unwrap(), 8, 8, 1.0).unwrap();
        let visc = ViscosityField::uniform(&g, 1.0);
        let mut bc = BoundaryCondition::no_slip(&g);
        bc.left = WallCondition::Dirichlet { u: 1.0, v: 0.0 };
        assert!(matches!(StokesOperator::new(&g, &visc, &bc), Err(Error::WellPosedness(_))));
    }

    #[test]
    fn navier_stokes_zero_forcing_one_iteration() {
        let g = build_domain_grid(&DomainSpec::new(1.0, Lateral::Walls).unwrap(), 8, 8, 1.0).unwrap();
        let visc = ViscosityField::uniform(&g, 1.0);
        let (s, st) = solve_navier_stokes(&g, &visc, &BoundaryCondition::no_slip(&g), &FaceField::zeros(&g), &Default::default())
            .unwrap();
        assert_eq!(s.max_abs_velocity(), 0.0);
        assert_eq!(st.picard_iters, 1);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig {
            picard_damping: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            linear_tol: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
