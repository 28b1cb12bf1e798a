//! Staggered (MAC) grid geometry for perforated and periodic domains.
//!
//! The computational domain is the unit square tiled by `m x m` unit cells,
//! each discretised by `n x n` pressure cells (`h = 1/(m*n)`). Obstacles are
//! rendered by staircase masking: a pressure cell is SOLID when its center,
//! mapped to cell-local coordinates in `[-1/2, 1/2]^2`, lies inside the
//! obstacle. Velocity components live on cell faces; every face is classified
//! from the two adjacent cell masks.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Obstacle geometry of a single colloidal particle in cell-local coordinates.
///
/// The closure of every admissible shape is contained in the open square
/// `(-0.45, 0.45)^2`, which keeps at least one fluid ring between the
/// obstacle and the cell boundary at the resolutions we admit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleShape {
    None,
    Disk { radius: f64 },
    Superellipse { rx: f64, ry: f64, p: f64 },
}

impl ObstacleShape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ObstacleShape::None => Ok(()),
            ObstacleShape::Disk { radius } => {
                if radius > 0.0 && radius <= 0.45 {
                    Ok(())
                } else {
                    Err(Error::InvalidShape(format!(
                        "disk radius {radius} outside (0, 0.45]"
                    )))
                }
            }
            ObstacleShape::Superellipse { rx, ry, p } => {
                if !(rx > 0.0 && rx <= 0.45) {
                    Err(Error::InvalidShape(format!("rx {rx} outside (0, 0.45]")))
                } else if !(ry > 0.0 && ry <= 0.45) {
                    Err(Error::InvalidShape(format!("ry {ry} outside (0, 0.45]")))
                } else if !(2.0..=20.0).contains(&p) {
                    Err(Error::InvalidShape(format!("exponent {p} outside [2, 20]")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Membership test in cell-local coordinates `y` in `[-1/2, 1/2]^2`.
    pub fn contains(&self, y1: f64, y2: f64) -> bool {
        match *self {
            ObstacleShape::None => false,
            ObstacleShape::Disk { radius } => y1 * y1 + y2 * y2 < radius * radius,
            ObstacleShape::Superellipse { rx, ry, p } => {
                (y1 / rx).abs().powf(p) + (y2 / ry).abs().powf(p) < 1.0
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ObstacleShape::None)
    }
}

/// Fluid fraction `1 - area(shape)` of the unit cell.
///
/// Exact for `none` and disks; for superellipses the area is
/// `4 rx ry Gamma(1 + 1/p)^2 / Gamma(1 + 2/p)`, accurate well below 1e-10.
pub fn analytic_theta(shape: &ObstacleShape) -> f64 {
    match *shape {
        ObstacleShape::None => 1.0,
        ObstacleShape::Disk { radius } => 1.0 - std::f64::consts::PI * radius * radius,
        ObstacleShape::Superellipse { rx, ry, p } => {
            use statrs::function::gamma::gamma;
            let area = 4.0 * rx * ry * gamma(1.0 + 1.0 / p).powi(2) / gamma(1.0 + 2.0 / p);
            1.0 - area
        }
    }
}

/// Resolution and obstacle of a perforated grid over the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of unit cells per axis; the obstacle scale is `1/m`.
    pub m: usize,
    /// Pressure cells per unit cell per axis (even, at least 8).
    pub n: usize,
    pub shape: ObstacleShape,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidShape(format!("m = {} must be >= 1", self.m)));
        }
        if self.n < 8 || self.n % 2 != 0 {
            return Err(Error::InvalidShape(format!(
                "n = {} must be even and >= 8",
                self.n
            )));
        }
        self.shape.validate()
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.m as f64
    }
}

/// Whether the grid carries physical walls or wraps periodically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTopology {
    /// The unit square with no-slip walls on its boundary.
    Physical,
    /// A single unit cell with wrap-around index arithmetic in both axes.
    Periodic,
}

/// Classification of a velocity face from its two adjacent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceClass {
    FluidFluid,
    FluidSolid,
    SolidSolid,
    PhysicalBoundary,
}

/// Staggered-grid geometry of a perforated domain.
///
/// Immutable after construction; all solvers and diagnostics borrow it.
#[derive(Debug, Clone)]
pub struct PerforatedGrid {
    pub spec: GridSpec,
    pub topology: GridTopology,
    /// Pressure cells per axis (`m * n`).
    pub nx: usize,
    /// Uniform mesh width `1 / nx` in the grid's own coordinates.
    pub h: f64,
    /// Coordinate of the left/bottom domain edge (0 for physical grids,
    /// -1/2 for the unit cell).
    pub origin: f64,
    /// `true` where the pressure cell is solid; row-major `j * nx + i`.
    pub cell_solid: Vec<bool>,
    /// Classification of x-normal faces (`u` faces).
    pub u_class: Vec<FaceClass>,
    /// Classification of y-normal faces (`v` faces).
    pub v_class: Vec<FaceClass>,
    /// Fluid cells per unit cell divided by `n^2`.
    pub theta_discrete: f64,
    /// Number of fluid pressure cells in the whole grid.
    pub fluid_cells: usize,
}

impl PerforatedGrid {
    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.nx);
        j * self.nx + i
    }

    #[inline]
    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.cell_solid[self.cell_index(i, j)]
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.nx
    }

    /// Number of x-normal faces: `(nx+1) * nx` physical, `nx * nx` periodic.
    #[inline]
    pub fn u_count(&self) -> usize {
        match self.topology {
            GridTopology::Physical => (self.nx + 1) * self.nx,
            GridTopology::Periodic => self.nx * self.nx,
        }
    }

    #[inline]
    pub fn v_count(&self) -> usize {
        self.u_count()
    }

    /// Index of the x-normal face on the left edge of cell column `i`
    /// (`i` may equal `nx` on physical grids; wraps on periodic grids).
    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        match self.topology {
            GridTopology::Physical => {
                debug_assert!(i <= self.nx && j < self.nx);
                j * (self.nx + 1) + i
            }
            GridTopology::Periodic => j * self.nx + (i % self.nx),
        }
    }

    #[inline]
    pub fn v_index(&self, i: usize, j: usize) -> usize {
        match self.topology {
            GridTopology::Physical => {
                debug_assert!(i < self.nx && j <= self.nx);
                j * self.nx + i
            }
            GridTopology::Periodic => (j % self.nx) * self.nx + i,
        }
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin + (i as f64 + 0.5) * self.h,
            self.origin + (j as f64 + 0.5) * self.h,
        )
    }

    #[inline]
    pub fn u_face_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin + i as f64 * self.h,
            self.origin + (j as f64 + 0.5) * self.h,
        )
    }

    #[inline]
    pub fn v_face_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin + (i as f64 + 0.5) * self.h,
            self.origin + j as f64 * self.h,
        )
    }

    /// Solid flag of the cell left of u-face `(i, j)`; `None` outside a
    /// physical domain.
    #[inline]
    pub fn cell_left_of_u(&self, i: usize, j: usize) -> Option<bool> {
        match self.topology {
            GridTopology::Physical => {
                if i == 0 {
                    None
                } else {
                    Some(self.is_solid(i - 1, j))
                }
            }
            GridTopology::Periodic => Some(self.is_solid((i + self.nx - 1) % self.nx, j)),
        }
    }

    #[inline]
    pub fn cell_right_of_u(&self, i: usize, j: usize) -> Option<bool> {
        match self.topology {
            GridTopology::Physical => {
                if i == self.nx {
                    None
                } else {
                    Some(self.is_solid(i, j))
                }
            }
            GridTopology::Periodic => Some(self.is_solid(i % self.nx, j)),
        }
    }

    #[inline]
    pub fn cell_below_v(&self, i: usize, j: usize) -> Option<bool> {
        match self.topology {
            GridTopology::Physical => {
                if j == 0 {
                    None
                } else {
                    Some(self.is_solid(i, j - 1))
                }
            }
            GridTopology::Periodic => Some(self.is_solid(i, (j + self.nx - 1) % self.nx)),
        }
    }

    #[inline]
    pub fn cell_above_v(&self, i: usize, j: usize) -> Option<bool> {
        match self.topology {
            GridTopology::Physical => {
                if j == self.nx {
                    None
                } else {
                    Some(self.is_solid(i, j))
                }
            }
            GridTopology::Periodic => Some(self.is_solid(i, j % self.nx)),
        }
    }

    /// Wrapped/checked cell neighbor in direction `(di, dj)`.
    #[inline]
    pub fn cell_neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<(usize, usize)> {
        let nx = self.nx as isize;
        let (ni, nj) = (i as isize + di, j as isize + dj);
        match self.topology {
            GridTopology::Physical => {
                if ni < 0 || nj < 0 || ni >= nx || nj >= nx {
                    None
                } else {
                    Some((ni as usize, nj as usize))
                }
            }
            GridTopology::Periodic => Some((
                ((ni % nx + nx) % nx) as usize,
                ((nj % nx + nx) % nx) as usize,
            )),
        }
    }

    /// Unit cell `(k1, k2)` containing pressure cell `(i, j)`.
    #[inline]
    pub fn unit_cell_of(&self, i: usize, j: usize) -> (usize, usize) {
        (i / self.spec.n, j / self.spec.n)
    }
}

fn unit_cell_pattern(n: usize, shape: &ObstacleShape) -> Vec<bool> {
    let mut pattern = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            let y1 = (i as f64 + 0.5) / n as f64 - 0.5;
            let y2 = (j as f64 + 0.5) / n as f64 - 0.5;
            pattern[j * n + i] = shape.contains(y1, y2);
        }
    }
    pattern
}

/// Flood fill over 4-neighbor fluid cells of the unit-cell pattern, without
/// wrap: connectivity is required within the closed cell, matching a fluid
/// region that surrounds the obstacle.
fn fluid_connected(n: usize, pattern: &[bool]) -> bool {
    let fluid_total = pattern.iter().filter(|s| !**s).count();
    if fluid_total == 0 {
        return false;
    }
    let start = pattern.iter().position(|s| !*s).unwrap();
    let mut seen = vec![false; n * n];
    let mut stack = vec![start];
    seen[start] = true;
    let mut reached = 0usize;
    while let Some(idx) = stack.pop() {
        reached += 1;
        let (i, j) = (idx % n, idx / n);
        let mut push = |ni: usize, nj: usize| {
            let nidx = nj * n + ni;
            if !pattern[nidx] && !seen[nidx] {
                seen[nidx] = true;
                stack.push(nidx);
            }
        };
        if i > 0 {
            push(i - 1, j);
        }
        if i + 1 < n {
            push(i + 1, j);
        }
        if j > 0 {
            push(i, j - 1);
        }
        if j + 1 < n {
            push(i, j + 1);
        }
    }
    reached == fluid_total
}

fn classify_faces(grid: &mut PerforatedGrid) {
    let nx = grid.nx;
    let classify = |left: Option<bool>, right: Option<bool>| match (left, right) {
        (None, _) | (_, None) => FaceClass::PhysicalBoundary,
        (Some(false), Some(false)) => FaceClass::FluidFluid,
        (Some(true), Some(true)) => FaceClass::SolidSolid,
        _ => FaceClass::FluidSolid,
    };
    let mut u_class = vec![FaceClass::FluidFluid; grid.u_count()];
    let mut v_class = vec![FaceClass::FluidFluid; grid.v_count()];
    let i_max = match grid.topology {
        GridTopology::Physical => nx + 1,
        GridTopology::Periodic => nx,
    };
    for j in 0..nx {
        for i in 0..i_max {
            u_class[grid.u_index(i, j)] = classify(grid.cell_left_of_u(i, j), grid.cell_right_of_u(i, j));
        }
    }
    for j in 0..i_max {
        for i in 0..nx {
            v_class[grid.v_index(i, j)] = classify(grid.cell_below_v(i, j), grid.cell_above_v(i, j));
        }
    }
    grid.u_class = u_class;
    grid.v_class = v_class;
}

fn build_grid(spec: GridSpec, topology: GridTopology, origin: f64) -> Result<PerforatedGrid> {
    spec.validate()?;
    let pattern = unit_cell_pattern(spec.n, &spec.shape);
    let solid_in_cell = pattern.iter().filter(|s| **s).count();
    if !spec.shape.is_none() && solid_in_cell == 0 {
        return Err(Error::InvalidShape(format!(
            "shape marks no solid cell at n = {}",
            spec.n
        )));
    }
    if !fluid_connected(spec.n, &pattern) {
        return Err(Error::DisconnectedFluid);
    }
    let nx = spec.m * spec.n;
    let mut cell_solid = vec![false; nx * nx];
    for j in 0..nx {
        for i in 0..nx {
            cell_solid[j * nx + i] = pattern[(j % spec.n) * spec.n + (i % spec.n)];
        }
    }
    let fluid_cells = cell_solid.iter().filter(|s| !**s).count();
    let theta_discrete = (spec.n * spec.n - solid_in_cell) as f64 / (spec.n * spec.n) as f64;
    let mut grid = PerforatedGrid {
        spec,
        topology,
        nx,
        h: 1.0 / nx as f64,
        origin,
        cell_solid,
        u_class: Vec::new(),
        v_class: Vec::new(),
        theta_discrete,
        fluid_cells,
    };
    classify_faces(&mut grid);
    Ok(grid)
}

/// Build the perforated grid over the unit square: `m x m` unit cells, each
/// masked by the same obstacle pattern, with no-slip walls on the boundary.
pub fn build_perforated_grid(spec: GridSpec) -> Result<PerforatedGrid> {
    build_grid(spec, GridTopology::Physical, 0.0)
}

/// Build a single periodically wrapped unit cell in local coordinates
/// `[-1/2, 1/2]^2` at resolution `n`.
pub fn build_unit_cell_grid(n: usize, shape: ObstacleShape) -> Result<PerforatedGrid> {
    let spec = GridSpec { m: 1, n, shape };
    build_grid(spec, GridTopology::Periodic, -0.5)
}

/// Build an `m x m` periodic tiling of the unit cell over `[0,1]^2`.
/// Used to verify the rescaling relation between cell solutions and
/// perforated-domain solves.
pub fn build_periodic_grid(spec: GridSpec) -> Result<PerforatedGrid> {
    build_grid(spec, GridTopology::Periodic, 0.0)
}

/// Scalar values at pressure-cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScalar(pub Vec<f64>);

impl CellScalar {
    pub fn zeros(grid: &PerforatedGrid) -> Self {
        CellScalar(vec![0.0; grid.cell_count()])
    }
}

/// Two-component vector values at pressure-cell centers, stored by component.
#[derive(Debug, Clone, PartialEq)]
pub struct CellVector2 {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl CellVector2 {
    pub fn zeros(grid: &PerforatedGrid) -> Self {
        CellVector2 {
            c1: vec![0.0; grid.cell_count()],
            c2: vec![0.0; grid.cell_count()],
        }
    }

    pub fn norm_at(&self, idx: usize) -> f64 {
        self.c1[idx].hypot(self.c2[idx])
    }
}

/// Velocity components at faces: `u` on x-normal faces, `v` on y-normal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &PerforatedGrid) -> Self {
        FaceField {
            u: vec![0.0; grid.u_count()],
            v: vec![0.0; grid.v_count()],
        }
    }
}
