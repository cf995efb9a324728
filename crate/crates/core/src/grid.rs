//! Nonuniform staggered grids with cell masks.
//!
//! The fluid domain is `(0, lx) x (0, 1)`; the wall `x2 = 0` carries the
//! wall law. A thin layer below it is represented by extra rows marked
//! [`CellKind::Layer`]; cell problems live on `(-1/2, 1/2) x (-max h, 0)`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::expr::{parse_expr, Expr};

/// Minimum number of grid rows across the deepest point of a layer or cell.
pub const MIN_LAYER_ROWS: usize = 8;

const PROFILE_SAMPLES: usize = 2049;

type ProfileFn = dyn Fn(f64) -> Result<f64> + Send + Sync;

/// A nonnegative boundary profile `h(x)`.
#[derive(Clone)]
pub struct Profile {
    name: String,
    flat: Option<f64>,
    func: Arc<ProfileFn>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile").field("name", &self.name).finish()
    }
}

impl Profile {
    pub fn flat(height: f64) -> Profile {
        Profile {
            name: format!("flat:{height}"),
            flat: Some(height),
            func: Arc::new(move |_| Ok(height)),
        }
    }

    pub fn from_expr(expr: Expr) -> Profile {
        let name = expr.to_string();
        Profile {
            name,
            flat: None,
            func: Arc::new(move |x| expr.evaluate(x, 0.0)),
        }
    }

    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Profile {
        Profile {
            name: name.into(),
            flat: None,
            func: Arc::new(move |x| Ok(f(x))),
        }
    }

    /// Parses `flat:H`, `bump:A` (`A cos^2(pi x)`), `tent:A` (`A (1 - 2|x|)`)
    /// or a full expression in `x`.
    pub fn parse(spec: &str) -> Result<Profile> {
        let spec = spec.trim();
        let shortcut = |prefix: &str| -> Option<Result<f64>> {
            spec.strip_prefix(prefix).map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad profile amplitude in '{spec}'")))
            })
        };
        if let Some(h) = shortcut("flat:") {
            return Ok(Profile::flat(h?));
        }
        if let Some(a) = shortcut("bump:") {
            let a = a?;
            return Ok(Profile::from_fn(spec, move |x| {
                let c = (std::f64::consts::PI * x).cos();
                a * c * c
            }));
        }
        if let Some(a) = shortcut("tent:") {
            let a = a?;
            return Ok(Profile::from_fn(spec, move |x| a * (1.0 - 2.0 * x.abs()).max(0.0)));
        }
        Ok(Profile::from_expr(parse_expr(spec)?))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = (self.func)(x)?;
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("profile {} is not finite at x = {x}", self.name)));
        }
        Ok(v)
    }

    /// `Some(H)` for the constant verification fixture `h = H`.
    pub fn flat_height(&self) -> Option<f64> {
        self.flat
    }

    fn samples(&self, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
        (0..PROFILE_SAMPLES)
            .map(|k| {
                let x = a + (b - a) * k as f64 / (PROFILE_SAMPLES - 1) as f64;
                self.eval(x).map(|h| (x, h))
            })
            .collect()
    }

    /// Sampled `(min, max)` over `[a, b]`.
    pub fn range(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        let s = self.samples(a, b)?;
        Ok(s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, h)| {
            (lo.min(h), hi.max(h))
        }))
    }

    /// Largest sampled slope over `[a, b]`.
    pub fn lipschitz_estimate(&self, a: f64, b: f64) -> Result<f64> {
        let s = self.samples(a, b)?;
        Ok(s.windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    /// `h_eps(x) = h(x / eps)` repeated over cells of width `eps`; `h` vanishes at `+-1/2`.
    Periodic,
    /// `h_eps = h`, strictly positive.
    Fixed,
}

#[derive(Debug, Clone)]
pub struct LayerProfile {
    pub kind: ProfileKind,
    pub h: Profile,
    pub eps: f64,
}

impl LayerProfile {
    pub fn new(kind: ProfileKind, h: Profile, eps: f64) -> Result<LayerProfile> {
        if !(eps > 0.0 && eps.is_finite()) {
            return param(format!("layer scale must be positive, got {eps}"));
        }
        let lp = LayerProfile { kind, h, eps };
        let (lo, _) = match kind {
            ProfileKind::Periodic => lp.h.range(-0.5, 0.5)?,
            ProfileKind::Fixed => (0.0, 0.0),
        };
        if lo < 0.0 {
            return param(format!("profile {} takes negative values", lp.h.name()));
        }
        if kind == ProfileKind::Periodic && lp.h.flat_height().is_none() {
            let ends = lp.h.eval(-0.5)?.abs().max(lp.h.eval(0.5)?.abs());
            if ends > 1e-9 {
                return param(format!("periodic profile {} must vanish at the cell ends", lp.h.name()));
            }
        }
        Ok(lp)
    }

    /// Checks positivity over `[0, lx]` for fixed profiles.
    pub fn validate_on(&self, lx: f64) -> Result<()> {
        if self.kind == ProfileKind::Fixed {
            let (lo, _) = self.h.range(0.0, lx)?;
            if lo <= 0.0 {
                return param(format!("fixed profile {} must be strictly positive", self.h.name()));
            }
        }
        Ok(())
    }

    /// Local layer depth `eps * h_eps(x)` at `x` in `(0, lx)`.
    pub fn depth_at(&self, x: f64, lx: f64) -> Result<f64> {
        match self.kind {
            ProfileKind::Fixed => Ok(self.eps * self.h.eval(x)?),
            ProfileKind::Periodic => {
                let k = (x / self.eps).round();
                let lo = (k - 0.5) * self.eps;
                let hi = (k + 0.5) * self.eps;
                let slack = 1e-12 * lx;
                if lo < -slack || hi > lx + slack {
                    return Ok(0.0);
                }
                Ok(self.eps * self.h.eval(x / self.eps - k)?)
            }
        }
    }

    /// `eps * sup h`.
    pub fn max_depth(&self, lx: f64) -> Result<f64> {
        let (_, hi) = match self.kind {
            ProfileKind::Periodic => self.h.range(-0.5, 0.5)?,
            ProfileKind::Fixed => self.h.range(0.0, lx)?,
        };
        Ok(self.eps * hi)
    }

    pub fn lipschitz_bound(&self, lx: f64) -> Result<f64> {
        match self.kind {
            ProfileKind::Periodic => self.h.lipschitz_estimate(-0.5, 0.5),
            ProfileKind::Fixed => self.h.lipschitz_estimate(0.0, lx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lateral {
    /// Left and right edges belong to the no-slip part of the boundary.
    Walls,
    Periodic,
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub lx: f64,
    pub lateral: Lateral,
    pub layer: Option<LayerProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Top,
    Left,
    Right,
}

impl DomainSpec {
    pub fn new(lx: f64, lateral: Lateral) -> Result<DomainSpec> {
        if !(lx > 0.0 && lx.is_finite()) {
            return param(format!("domain length must be positive, got {lx}"));
        }
        Ok(DomainSpec { lx, lateral, layer: None })
    }

    pub fn with_layer(mut self, layer: LayerProfile) -> Result<DomainSpec> {
        layer.validate_on(self.lx)?;
        self.layer = Some(layer);
        Ok(self)
    }

    /// The no-slip part of the boundary.
    pub fn gamma1(&self) -> Vec<Edge> {
        match self.lateral {
            Lateral::Walls => vec![Edge::Top, Edge::Left, Edge::Right],
            Lateral::Periodic => vec![Edge::Top],
        }
    }

    /// The wall-law part of the boundary.
    pub fn gamma2(&self) -> Vec<Edge> {
        vec![Edge::Bottom]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Fluid cell of the bulk domain.
    Fluid,
    /// Fluid cell of the thin layer or of a cell-problem domain.
    Layer,
    Solid,
}

impl CellKind {
    pub fn is_fluid(self) -> bool {
        self != CellKind::Solid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcTag {
    Dirichlet,
    NavierSlip,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeTags {
    pub bottom: BcTag,
    pub top: BcTag,
    pub left: BcTag,
    pub right: BcTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacGrid {
    x_faces: Vec<f64>,
    y_faces: Vec<f64>,
    periodic_x: bool,
    mask: Vec<CellKind>,
    omega_row: usize,
    tags: EdgeTags,
}

impl MacGrid {
    fn from_parts(x_faces: Vec<f64>, y_faces: Vec<f64>, periodic_x: bool, kind: CellKind, tags: EdgeTags) -> MacGrid {
        let n = (x_faces.len() - 1) * (y_faces.len() - 1);
        MacGrid {
            x_faces,
            y_faces,
            periodic_x,
            mask: vec![kind; n],
            omega_row: 0,
            tags,
        }
    }

    pub fn nx(&self) -> usize {
        self.x_faces.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_faces.len() - 1
    }

    pub fn x_faces(&self) -> &[f64] {
        &self.x_faces
    }

    pub fn y_faces(&self) -> &[f64] {
        &self.y_faces
    }

    pub fn periodic_x(&self) -> bool {
        self.periodic_x
    }

    pub fn tags(&self) -> EdgeTags {
        self.tags
    }

    /// First row of the bulk domain; rows below belong to the layer region.
    pub fn omega_row(&self) -> usize {
        self.omega_row
    }

    pub fn dx(&self, i: usize) -> f64 {
        self.x_faces[i + 1] - self.x_faces[i]
    }

    pub fn dy(&self, j: usize) -> f64 {
        self.y_faces[j + 1] - self.y_faces[j]
    }

    pub fn xc(&self, i: usize) -> f64 {
        0.5 * (self.x_faces[i] + self.x_faces[i + 1])
    }

    pub fn yc(&self, j: usize) -> f64 {
        0.5 * (self.y_faces[j] + self.y_faces[j + 1])
    }

    pub fn lx(&self) -> f64 {
        self.x_faces[self.nx()] - self.x_faces[0]
    }

    pub fn cell(&self, i: usize, j: usize) -> CellKind {
        self.mask[j * self.nx() + i]
    }

    pub fn is_fluid(&self, i: usize, j: usize) -> bool {
        self.cell(i, j).is_fluid()
    }

    pub fn mask(&self) -> &[CellKind] {
        &self.mask
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.mask.iter().filter(|&&k| k == kind).count()
    }

    /// Total area of cells of the given kind.
    pub fn area(&self, kind: CellKind) -> f64 {
        let mut a = 0.0;
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                if self.cell(i, j) == kind {
                    a += self.dx(i) * self.dy(j);
                }
            }
        }
        a
    }

    pub fn min_spacing(&self) -> f64 {
        let dx = (0..self.nx()).map(|i| self.dx(i)).fold(f64::INFINITY, f64::min);
        let dy = (0..self.ny()).map(|j| self.dy(j)).fold(f64::INFINITY, f64::min);
        dx.min(dy)
    }

    /// Quadrature weights for the tangential trace along the bottom edge,
    /// one per vertical face position `x_faces[i]`, `i = 0..=nx`. They sum
    /// to the edge length; for periodic grids the duplicate node `nx` has
    /// weight zero.
    pub fn bottom_weights(&self) -> Vec<f64> {
        let nx = self.nx();
        let mut w = vec![0.0; nx + 1];
        for i in 0..=nx {
            let left = if i > 0 {
                self.dx(i - 1)
            } else if self.periodic_x {
                self.dx(nx - 1)
            } else {
                0.0
            };
            let right = if i < nx { self.dx(i) } else { 0.0 };
            w[i] = 0.5 * (left + right);
        }
        if self.periodic_x {
            w[nx] = 0.0;
        }
        w
    }

    /// Prepends `rows` uniform rows of total height `depth` below the current
    /// bottom edge. The new cells are solid until a layer is rasterized.
    pub fn with_rows_below(&self, depth: f64, rows: usize) -> Result<MacGrid> {
        if !(depth > 0.0) || rows == 0 {
            return param("extension below the wall needs positive depth and rows");
        }
        let y0 = self.y_faces[0];
        let mut y_faces: Vec<f64> = (0..rows)
            .map(|k| y0 - depth + depth * k as f64 / rows as f64)
            .collect();
        y_faces.extend_from_slice(&self.y_faces);
        let nx = self.nx();
        let mut mask = vec![CellKind::Solid; rows * nx];
        mask.extend_from_slice(&self.mask);
        Ok(MacGrid {
            x_faces: self.x_faces.clone(),
            y_faces,
            periodic_x: self.periodic_x,
            mask,
            omega_row: self.omega_row + rows,
            tags: EdgeTags {
                bottom: BcTag::Dirichlet,
                ..self.tags
            },
        })
    }

    /// The bulk part of a layered grid (rows from `omega_row` up).
    pub fn omega_part(&self) -> MacGrid {
        let r = self.omega_row;
        let nx = self.nx();
        MacGrid {
            x_faces: self.x_faces.clone(),
            y_faces: self.y_faces[r..].to_vec(),
            periodic_x: self.periodic_x,
            mask: self.mask[r * nx..].to_vec(),
            omega_row: 0,
            tags: EdgeTags {
                bottom: BcTag::NavierSlip,
                ..self.tags
            },
        }
    }

    fn check_connected(&self) -> Result<()> {
        let (nx, ny) = (self.nx(), self.ny());
        let Some(start) = self.mask.iter().position(|k| k.is_fluid()) else {
            return Err(Error::DegenerateLayer("grid has no fluid cells".into()));
        };
        let mut seen = vec![false; nx * ny];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            let (i, j) = (c % nx, c / nx);
            let mut nbrs = Vec::with_capacity(4);
            if i > 0 {
                nbrs.push(c - 1);
            } else if self.periodic_x {
                nbrs.push(c + nx - 1);
            }
            if i + 1 < nx {
                nbrs.push(c + 1);
            } else if self.periodic_x {
                nbrs.push(c + 1 - nx);
            }
            if j > 0 {
                nbrs.push(c - nx);
            }
            if j + 1 < ny {
                nbrs.push(c + nx);
            }
            for n in nbrs {
                if !seen[n] && self.mask[n].is_fluid() {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        let disconnected = self.mask.iter().zip(&seen).any(|(k, &s)| k.is_fluid() && !s);
        if disconnected {
            return param("fluid region is not edge-connected");
        }
        Ok(())
    }
}

/// Grid of `(0, lx) x (0, 1)` with geometric vertical grading: row heights
/// grow by a constant ratio from the wall so that the top row is `grading`
/// times the bottom row.
pub fn build_domain_grid(spec: &DomainSpec, nx: usize, ny: usize, grading: f64) -> Result<MacGrid> {
    if nx < 8 || ny < 8 {
        return param(format!("grid needs at least 8 x 8 cells, got {nx} x {ny}"));
    }
    if !(1.0..=10.0).contains(&grading) {
        return param(format!("grading must lie in [1, 10], got {grading}"));
    }
    let x_faces: Vec<f64> = (0..=nx)
        .map(|i| if i == nx { spec.lx } else { spec.lx * i as f64 / nx as f64 })
        .collect();
    let y_faces = if grading == 1.0 {
        (0..=ny).map(|j| if j == ny { 1.0 } else { j as f64 / ny as f64 }).collect()
    } else {
        let q = grading.powf(1.0 / (ny - 1) as f64);
        let h0 = (q - 1.0) / (q.powi(ny as i32) - 1.0);
        let mut y = vec![0.0; ny + 1];
        let mut h = h0;
        for j in 0..ny {
            y[j + 1] = y[j] + h;
            h *= q;
        }
        y[ny] = 1.0;
        y
    };
    let lateral = match spec.lateral {
        Lateral::Walls => BcTag::Dirichlet,
        Lateral::Periodic => BcTag::Periodic,
    };
    Ok(MacGrid::from_parts(
        x_faces,
        y_faces,
        spec.lateral == Lateral::Periodic,
        CellKind::Fluid,
        EdgeTags {
            bottom: BcTag::NavierSlip,
            top: BcTag::Dirichlet,
            left: lateral,
            right: lateral,
        },
    ))
}

/// Marks the cells of the layer `{-eps h_eps(x) < y < 0}` whose centres lie
/// inside it. The grid must already extend below the wall.
pub fn rasterize_layer(profile: &LayerProfile, grid: &MacGrid) -> Result<MacGrid> {
    let lx = grid.lx();
    let depth = profile.max_depth(lx)?;
    let r = grid.omega_row();
    if depth <= 0.0 {
        return Err(Error::DegenerateLayer(format!("profile {} is identically zero", profile.h.name())));
    }
    if r == 0 || grid.y_faces()[0] > -depth * (1.0 - 1e-12) {
        return param(format!("grid must extend at least {depth} below the wall"));
    }
    let omega_min = grid.omega_part().min_spacing();
    if depth < omega_min * 1e-3 {
        return Err(Error::DegenerateLayer(format!("layer depth {depth} is below the grid spacing")));
    }
    let rows = (0..r).filter(|&j| grid.yc(j) > -depth).count();
    if rows < MIN_LAYER_ROWS {
        return Err(Error::Resolution {
            rows,
            required: MIN_LAYER_ROWS,
        });
    }
    let mut out = grid.clone();
    let nx = grid.nx();
    for i in 0..nx {
        let d = profile.depth_at(grid.xc(i), lx)?;
        for j in 0..r {
            out.mask[j * nx + i] = if grid.yc(j) > -d {
                CellKind::Layer
            } else {
                CellKind::Solid
            };
        }
    }
    if out.count(CellKind::Layer) == 0 {
        return Err(Error::DegenerateLayer("no cell centre falls inside the layer".into()));
    }
    out.check_connected()?;
    Ok(out)
}

/// Domain grid extended by `layer_rows` uniform rows across the deepest
/// point of the layer, with the layer rasterized.
pub fn build_layered_grid(spec: &DomainSpec, nx: usize, ny: usize, grading: f64, layer_rows: usize) -> Result<MacGrid> {
    let Some(layer) = &spec.layer else {
        return param("domain has no layer profile");
    };
    let base = build_domain_grid(spec, nx, ny, grading)?;
    let depth = layer.max_depth(spec.lx)?;
    if depth <= 0.0 {
        return Err(Error::DegenerateLayer(format!("profile {} is identically zero", layer.h.name())));
    }
    let extended = base.with_rows_below(depth, layer_rows)?;
    rasterize_layer(layer, &extended)
}

/// Grid of the cell domain `{ -1/2 < x < 1/2, -h(x) < y < 0 }`, periodic in `x`.
pub fn build_cell_domain(h: &Profile, nx: usize, ny: usize) -> Result<MacGrid> {
    if nx < 8 || ny < MIN_LAYER_ROWS {
        return Err(Error::Resolution {
            rows: ny.min(nx),
            required: MIN_LAYER_ROWS,
        });
    }
    let (lo, hi) = h.range(-0.5, 0.5)?;
    if lo < 0.0 {
        return param(format!("cell profile {} takes negative values", h.name()));
    }
    if hi <= 0.0 {
        return Err(Error::DegenerateLayer(format!("cell profile {} is identically zero", h.name())));
    }
    let flat = hi - lo <= 1e-12 * hi;
    if !flat {
        let ends = h.eval(-0.5)?.abs().max(h.eval(0.5)?.abs());
        if ends > 1e-9 * hi {
            return param(format!("cell profile {} must vanish at x = +-1/2", h.name()));
        }
    }
    let x_faces: Vec<f64> = (0..=nx).map(|i| -0.5 + i as f64 / nx as f64).collect();
    let y_faces: Vec<f64> = (0..=ny)
        .map(|j| if j == ny { 0.0 } else { -hi + hi * j as f64 / ny as f64 })
        .collect();
    let mut g = MacGrid::from_parts(
        x_faces,
        y_faces,
        true,
        CellKind::Layer,
        EdgeTags {
            bottom: BcTag::Dirichlet,
            top: BcTag::Dirichlet,
            left: BcTag::Periodic,
            right: BcTag::Periodic,
        },
    );
    for i in 0..nx {
        let d = h.eval(g.xc(i))?;
        for j in 0..ny {
            if g.yc(j) <= -d {
                g.mask[j * nx + i] = CellKind::Solid;
            }
        }
    }
    if g.count(CellKind::Layer) == 0 {
        return Err(Error::DegenerateLayer("no cell centre falls inside the cell domain".into()));
    }
    g.check_connected()?;
    Ok(g)
}
