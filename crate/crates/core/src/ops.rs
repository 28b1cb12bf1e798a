//! Discrete differential operators and quadratures on staggered grids.
//!
//! Conventions shared by every consumer:
//! - Velocity unknowns are the FLUID_FLUID faces only; every other face
//!   carries the value 0 (no-slip walls, obstacle boundaries, solid
//!   interiors). Difference quotients reach those zeros directly, which makes
//!   the discrete `grad` / `div` pair exactly adjoint and the velocity
//!   Laplacian equal to the graph Dirichlet form of the face-adjacency graph.
//! - Scalar fields at cell centers satisfy zero-flux conditions by dropping
//!   fluxes through non-FLUID_FLUID faces.
//! - In two dimensions the `h^2` quadrature weight cancels the `1/h^2` of a
//!   product of difference quotients, so gradient inner products reduce to
//!   sums of difference products over edges.

use crate::geometry::{CellVector2, FaceClass, FaceField, GridTopology, PerforatedGrid};
use crate::solver::{SparseOperator, TripletBuilder};

const NO_UNKNOWN: u32 = u32::MAX;

/// Mapping between fluid pressure cells and solver unknowns.
#[derive(Debug, Clone)]
pub struct PressureMap {
    pub unknown_of_cell: Vec<u32>,
    pub cells: Vec<u32>,
}

impl PressureMap {
    pub fn build(grid: &PerforatedGrid) -> Self {
        let mut unknown_of_cell = vec![NO_UNKNOWN; grid.cell_count()];
        let mut cells = Vec::with_capacity(grid.fluid_cells);
        for idx in 0..grid.cell_count() {
            if !grid.cell_solid[idx] {
                unknown_of_cell[idx] = cells.len() as u32;
                cells.push(idx as u32);
            }
        }
        PressureMap {
            unknown_of_cell,
            cells,
        }
    }

    #[inline]
    pub fn unknown(&self, cell: usize) -> Option<usize> {
        let u = self.unknown_of_cell[cell];
        (u != NO_UNKNOWN).then_some(u as usize)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Gather a full-length cell field into the unknown vector.
    pub fn gather(&self, field: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| field[c as usize]).collect()
    }

    /// Scatter an unknown vector back to a full-length cell field (zeros at
    /// solid cells).
    pub fn scatter(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &c) in self.cells.iter().enumerate() {
            out[c as usize] = x[k];
        }
    }
}

/// Mapping between FLUID_FLUID faces and velocity unknowns; `u` unknowns
/// first, then `v`.
#[derive(Debug, Clone)]
pub struct VelocityMap {
    pub unknown_of_u: Vec<u32>,
    pub unknown_of_v: Vec<u32>,
    pub n_u: usize,
    pub total: usize,
    pub u_faces: Vec<u32>,
    pub v_faces: Vec<u32>,
}

impl VelocityMap {
    pub fn build(grid: &PerforatedGrid) -> Self {
        let mut unknown_of_u = vec![NO_UNKNOWN; grid.u_count()];
        let mut unknown_of_v = vec![NO_UNKNOWN; grid.v_count()];
        let mut u_faces = Vec::new();
        let mut v_faces = Vec::new();
        for (idx, class) in grid.u_class.iter().enumerate() {
            if *class == FaceClass::FluidFluid {
                unknown_of_u[idx] = u_faces.len() as u32;
                u_faces.push(idx as u32);
            }
        }
        for (idx, class) in grid.v_class.iter().enumerate() {
            if *class == FaceClass::FluidFluid {
                unknown_of_v[idx] = v_faces.len() as u32;
                v_faces.push(idx as u32);
            }
        }
        let n_u = u_faces.len();
        let total = n_u + v_faces.len();
        VelocityMap {
            unknown_of_u,
            unknown_of_v,
            n_u,
            total,
            u_faces,
            v_faces,
        }
    }

    #[inline]
    pub fn u_unknown(&self, face: usize) -> Option<usize> {
        let u = self.unknown_of_u[face];
        (u != NO_UNKNOWN).then_some(u as usize)
    }

    #[inline]
    pub fn v_unknown(&self, face: usize) -> Option<usize> {
        let v = self.unknown_of_v[face];
        (v != NO_UNKNOWN).then_some(self.n_u + v as usize)
    }

    pub fn gather(&self, field: &FaceField) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total);
        x.extend(self.u_faces.iter().map(|&f| field.u[f as usize]));
        x.extend(self.v_faces.iter().map(|&f| field.v[f as usize]));
        x
    }

    pub fn scatter(&self, x: &[f64], grid: &PerforatedGrid) -> FaceField {
        let mut field = FaceField::zeros(grid);
        for (k, &f) in self.u_faces.iter().enumerate() {
            field.u[f as usize] = x[k];
        }
        for (k, &f) in self.v_faces.iter().enumerate() {
            field.v[f as usize] = x[self.n_u + k];
        }
        field
    }
}

/// Which velocity component an edge couples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// Visit every gradient edge of one velocity component once.
///
/// An edge joins two stored faces, or one stored face and a virtual zero
/// beyond a physical wall (`None`); the Laplacian stencil and the gradient
/// quadrature must enumerate the identical set for the discrete energy
/// identity to hold.
pub fn for_each_component_edge<F: FnMut(usize, Option<usize>)>(
    grid: &PerforatedGrid,
    comp: Component,
    mut visit: F,
) {
    let n = grid.nx;
    match (grid.topology, comp) {
        (GridTopology::Physical, Component::U) => {
            for j in 0..n {
                for i in 0..n {
                    visit(grid.u_index(i, j), Some(grid.u_index(i + 1, j)));
                }
            }
            for i in 0..=n {
                visit(grid.u_index(i, 0), None);
                for j in 0..n - 1 {
                    visit(grid.u_index(i, j), Some(grid.u_index(i, j + 1)));
                }
                visit(grid.u_index(i, n - 1), None);
            }
        }
        (GridTopology::Physical, Component::V) => {
            for j in 0..=n {
                visit(grid.v_index(0, j), None);
                for i in 0..n - 1 {
                    visit(grid.v_index(i, j), Some(grid.v_index(i + 1, j)));
                }
                visit(grid.v_index(n - 1, j), None);
            }
            for i in 0..n {
                for j in 0..n {
                    visit(grid.v_index(i, j), Some(grid.v_index(i, j + 1)));
                }
            }
        }
        (GridTopology::Periodic, Component::U) => {
            for j in 0..n {
                for i in 0..n {
                    visit(grid.u_index(i, j), Some(grid.u_index((i + 1) % n, j)));
                    visit(grid.u_index(i, j), Some(grid.u_index(i, (j + 1) % n)));
                }
            }
        }
        (GridTopology::Periodic, Component::V) => {
            for j in 0..n {
                for i in 0..n {
                    visit(grid.v_index(i, j), Some(grid.v_index((i + 1) % n, j)));
                    visit(grid.v_index(i, j), Some(grid.v_index(i, (j + 1) % n)));
                }
            }
        }
    }
}

/// Vector Laplacian `-Delta` on the velocity unknowns, scaled `1/h^2`, with
/// zero values at every non-unknown face.
pub fn build_velocity_laplacian(grid: &PerforatedGrid, vmap: &VelocityMap) -> SparseOperator {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut b = TripletBuilder::new(vmap.total, vmap.total);
    let mut add_edges = |comp: Component| {
        let unknown = |face: usize| match comp {
            Component::U => vmap.u_unknown(face),
            Component::V => vmap.v_unknown(face),
        };
        for_each_component_edge(grid, comp, |f1, f2| {
            let a = unknown(f1);
            let bb = f2.and_then(unknown);
            if let Some(ia) = a {
                b.push(ia, ia, inv_h2);
            }
            if let Some(ib) = bb {
                b.push(ib, ib, inv_h2);
            }
            if let (Some(ia), Some(ib)) = (a, bb) {
                b.push(ia, ib, -inv_h2);
                b.push(ib, ia, -inv_h2);
            }
        });
    };
    add_edges(Component::U);
    add_edges(Component::V);
    b.build(true)
}

/// Discrete divergence: fluid cells by velocity unknowns, entries `±1/h`.
pub fn build_divergence(
    grid: &PerforatedGrid,
    vmap: &VelocityMap,
    pmap: &PressureMap,
) -> SparseOperator {
    let inv_h = 1.0 / grid.h;
    let mut b = TripletBuilder::new(pmap.len(), vmap.total);
    for (row, &cell) in pmap.cells.iter().enumerate() {
        let (i, j) = ((cell as usize) % grid.nx, (cell as usize) / grid.nx);
        if let Some(col) = vmap.u_unknown(grid.u_index(i, j)) {
            b.push(row, col, -inv_h);
        }
        if let Some(col) = vmap.u_unknown(grid.u_index(i + 1, j)) {
            b.push(row, col, inv_h);
        }
        if let Some(col) = vmap.v_unknown(grid.v_index(i, j)) {
            b.push(row, col, -inv_h);
        }
        if let Some(col) = vmap.v_unknown(grid.v_index(i, j + 1)) {
            b.push(row, col, inv_h);
        }
    }
    b.build(false)
}

/// Graph Laplacian over fluid cells with FLUID_FLUID adjacency (the masked
/// Neumann Laplacian multiplied by `-h^2`).
pub fn build_fluid_graph_laplacian(grid: &PerforatedGrid, pmap: &PressureMap) -> SparseOperator {
    let mut b = TripletBuilder::new(pmap.len(), pmap.len());
    for (row, &cell) in pmap.cells.iter().enumerate() {
        let (i, j) = ((cell as usize) % grid.nx, (cell as usize) / grid.nx);
        let mut add = |face_is_ff: bool, nb: Option<(usize, usize)>| {
            if !face_is_ff {
                return;
            }
            let (ni, nj) = nb.expect("FLUID_FLUID face always has two cells");
            let col = pmap
                .unknown(grid.cell_index(ni, nj))
                .expect("FLUID_FLUID neighbor is fluid");
            b.push(row, row, 1.0);
            b.push(row, col, -1.0);
        };
        add(
            grid.u_class[grid.u_index(i, j)] == FaceClass::FluidFluid,
            grid.cell_neighbor(i, j, -1, 0),
        );
        add(
            grid.u_class[grid.u_index(i + 1, j)] == FaceClass::FluidFluid,
            grid.cell_neighbor(i, j, 1, 0),
        );
        add(
            grid.v_class[grid.v_index(i, j)] == FaceClass::FluidFluid,
            grid.cell_neighbor(i, j, 0, -1),
        );
        add(
            grid.v_class[grid.v_index(i, j + 1)] == FaceClass::FluidFluid,
            grid.cell_neighbor(i, j, 0, 1),
        );
    }
    b.build(true)
}

/// Gradient inner product of two face fields over the full edge set.
/// Equal to `h^2 u^T (-Delta_h) v`; approximates the viscous bilinear form.
pub fn velocity_grad_inner(grid: &PerforatedGrid, a: &FaceField, b: &FaceField) -> f64 {
    let mut acc = 0.0;
    for_each_component_edge(grid, Component::U, |f1, f2| {
        let da = a.u[f1] - f2.map_or(0.0, |f| a.u[f]);
        let db = b.u[f1] - f2.map_or(0.0, |f| b.u[f]);
        acc += da * db;
    });
    for_each_component_edge(grid, Component::V, |f1, f2| {
        let da = a.v[f1] - f2.map_or(0.0, |f| a.v[f]);
        let db = b.v[f1] - f2.map_or(0.0, |f| b.v[f]);
        acc += da * db;
    });
    acc
}

/// `L^q` norm of a face field over the perforated domain
/// (`h^2` cell measure per face sample, both components).
pub fn face_lq_norm(grid: &PerforatedGrid, f: &FaceField, q: f64) -> f64 {
    let h2 = grid.h * grid.h;
    let mut acc = 0.0;
    for v in f.u.iter().chain(f.v.iter()) {
        acc += v.abs().powf(q);
    }
    (h2 * acc).powf(1.0 / q)
}

/// `L^q` norm of the face-field gradient from difference quotients over the
/// edge set: `(sum h^2 |diff/h|^q)^(1/q)`.
pub fn face_grad_lq_norm(grid: &PerforatedGrid, f: &FaceField, q: f64) -> f64 {
    let weight = grid.h.powf(2.0 - q);
    let mut acc = 0.0;
    for_each_component_edge(grid, Component::U, |f1, f2| {
        let d = f.u[f1] - f2.map_or(0.0, |g| f.u[g]);
        acc += d.abs().powf(q);
    });
    for_each_component_edge(grid, Component::V, |f1, f2| {
        let d = f.v[f1] - f2.map_or(0.0, |g| f.v[g]);
        acc += d.abs().powf(q);
    });
    (weight * acc).powf(1.0 / q)
}

/// Divergence of a face field at every cell (solid cells get 0).
pub fn divergence_at_cells(grid: &PerforatedGrid, f: &FaceField) -> Vec<f64> {
    let inv_h = 1.0 / grid.h;
    let mut out = vec![0.0; grid.cell_count()];
    for j in 0..grid.nx {
        for i in 0..grid.nx {
            let idx = grid.cell_index(i, j);
            if grid.cell_solid[idx] {
                continue;
            }
            out[idx] = inv_h
                * (f.u[grid.u_index(i + 1, j)] - f.u[grid.u_index(i, j)]
                    + f.v[grid.v_index(i, j + 1)]
                    - f.v[grid.v_index(i, j)]);
        }
    }
    out
}

/// Interpolate face velocities to cell centers (two-point averages; zeros at
/// non-fluid faces are part of the average).
pub fn face_to_cell(grid: &PerforatedGrid, f: &FaceField) -> CellVector2 {
    let mut out = CellVector2::zeros(grid);
    for j in 0..grid.nx {
        for i in 0..grid.nx {
            let idx = grid.cell_index(i, j);
            out.c1[idx] = 0.5 * (f.u[grid.u_index(i, j)] + f.u[grid.u_index(i + 1, j)]);
            out.c2[idx] = 0.5 * (f.v[grid.v_index(i, j)] + f.v[grid.v_index(i, j + 1)]);
        }
    }
    out
}

/// Interpolate a cell vector field to faces (two-point averages; a face with
/// any missing or solid side gets 0, consistent with no-slip data).
pub fn cell_to_face(grid: &PerforatedGrid, c: &CellVector2) -> FaceField {
    let mut out = FaceField::zeros(grid);
    let n = grid.nx;
    let u_hi = match grid.topology {
        GridTopology::Physical => n + 1,
        GridTopology::Periodic => n,
    };
    for j in 0..n {
        for i in 0..u_hi {
            let face = grid.u_index(i, j);
            if grid.u_class[face] != FaceClass::FluidFluid {
                continue;
            }
            let left = match grid.topology {
                GridTopology::Physical => grid.cell_index(i - 1, j),
                GridTopology::Periodic => grid.cell_index((i + n - 1) % n, j),
            };
            let right = grid.cell_index(i % n, j);
            out.u[face] = 0.5 * (c.c1[left] + c.c1[right]);
        }
    }
    for j in 0..u_hi {
        for i in 0..n {
            let face = grid.v_index(i, j);
            if grid.v_class[face] != FaceClass::FluidFluid {
                continue;
            }
            let below = match grid.topology {
                GridTopology::Physical => grid.cell_index(i, j - 1),
                GridTopology::Periodic => grid.cell_index(i, (j + n - 1) % n),
            };
            let above = grid.cell_index(i, j % n);
            out.v[face] = 0.5 * (c.c2[below] + c.c2[above]);
        }
    }
    out
}

/// Masked five-point Laplacian of a cell scalar with zero-flux walls:
/// `(1/h^2) sum over FLUID_FLUID faces of (f_nb - f_c)`.
pub fn masked_cell_laplacian(grid: &PerforatedGrid, f: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut out = vec![0.0; grid.cell_count()];
    for j in 0..grid.nx {
        for i in 0..grid.nx {
            let idx = grid.cell_index(i, j);
            if grid.cell_solid[idx] {
                continue;
            }
            let mut acc = 0.0;
            let mut add = |is_ff: bool, nb: Option<(usize, usize)>| {
                if is_ff {
                    let (ni, nj) = nb.unwrap();
                    acc += f[grid.cell_index(ni, nj)] - f[idx];
                }
            };
            add(
                grid.u_class[grid.u_index(i, j)] == FaceClass::FluidFluid,
                grid.cell_neighbor(i, j, -1, 0),
            );
            add(
                grid.u_class[grid.u_index(i + 1, j)] == FaceClass::FluidFluid,
                grid.cell_neighbor(i, j, 1, 0),
            );
            add(
                grid.v_class[grid.v_index(i, j)] == FaceClass::FluidFluid,
                grid.cell_neighbor(i, j, 0, -1),
            );
            add(
                grid.v_class[grid.v_index(i, j + 1)] == FaceClass::FluidFluid,
                grid.cell_neighbor(i, j, 0, 1),
            );
            out[idx] = acc * inv_h2;
        }
    }
    out
}

/// Fluid-aware gradient of a cell scalar at cell centers: centered where both
/// neighbors are fluid, one-sided where one is, zero where none.
pub fn masked_cell_gradient(grid: &PerforatedGrid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; grid.cell_count()];
    let mut gy = vec![0.0; grid.cell_count()];
    let h = grid.h;
    for j in 0..grid.nx {
        for i in 0..grid.nx {
            let idx = grid.cell_index(i, j);
            if grid.cell_solid[idx] {
                continue;
            }
            let fluid_nb = |di: isize, dj: isize| -> Option<f64> {
                grid.cell_neighbor(i, j, di, dj).and_then(|(ni, nj)| {
                    let n_idx = grid.cell_index(ni, nj);
                    (!grid.cell_solid[n_idx]).then(|| f[n_idx])
                })
            };
            gx[idx] = match (fluid_nb(-1, 0), fluid_nb(1, 0)) {
                (Some(w), Some(e)) => (e - w) / (2.0 * h),
                (None, Some(e)) => (e - f[idx]) / h,
                (Some(w), None) => (f[idx] - w) / h,
                (None, None) => 0.0,
            };
            gy[idx] = match (fluid_nb(0, -1), fluid_nb(0, 1)) {
                (Some(s), Some(n)) => (n - s) / (2.0 * h),
                (None, Some(n)) => (n - f[idx]) / h,
                (Some(s), None) => (f[idx] - s) / h,
                (None, None) => 0.0,
            };
        }
    }
    (gx, gy)
}

/// Gradient inner product of two cell scalars over FLUID_FLUID faces
/// (zero-flux walls): `sum (a_R - a_L)(b_R - b_L)`.
pub fn cell_grad_inner(grid: &PerforatedGrid, a: &[f64], b: &[f64]) -> f64 {
    let n = grid.nx;
    let mut acc = 0.0;
    let u_hi = match grid.topology {
        GridTopology::Physical => n + 1,
        GridTopology::Periodic => n,
    };
    for j in 0..n {
        for i in 0..u_hi {
            let face = grid.u_index(i, j);
            if grid.u_class[face] != FaceClass::FluidFluid {
                continue;
            }
            let left = match grid.topology {
                GridTopology::Physical => grid.cell_index(i - 1, j),
                GridTopology::Periodic => grid.cell_index((i + n - 1) % n, j),
            };
            let right = grid.cell_index(i % n, j);
            acc += (a[right] - a[left]) * (b[right] - b[left]);
        }
    }
    for j in 0..u_hi {
        for i in 0..n {
            let face = grid.v_index(i, j);
            if grid.v_class[face] != FaceClass::FluidFluid {
                continue;
            }
            let below = match grid.topology {
                GridTopology::Physical => grid.cell_index(i, j - 1),
                GridTopology::Periodic => grid.cell_index(i, (j + n - 1) % n),
            };
            let above = grid.cell_index(i, j % n);
            acc += (a[above] - a[below]) * (b[above] - b[below]);
        }
    }
    acc
}

/// `L^q` norm of a cell scalar over fluid cells.
pub fn cell_lq_norm(grid: &PerforatedGrid, f: &[f64], q: f64) -> f64 {
    let h2 = grid.h * grid.h;
    let mut acc = 0.0;
    for idx in 0..grid.cell_count() {
        if !grid.cell_solid[idx] {
            acc += f[idx].abs().powf(q);
        }
    }
    (h2 * acc).powf(1.0 / q)
}

/// `L^q` norm of a cell-scalar gradient from face difference quotients.
/// With `zero_walls`, quotients across FLUID_SOLID and boundary faces reach a
/// virtual zero (fields vanishing on the walls); otherwise those faces carry
/// no flux.
pub fn cell_grad_lq_norm(grid: &PerforatedGrid, f: &[f64], q: f64, zero_walls: bool) -> f64 {
    let n = grid.nx;
    let weight = grid.h.powf(2.0 - q);
    let mut acc = 0.0;
    let mut add_face = |class: FaceClass, a: Option<usize>, b: Option<usize>| {
        let diff = match class {
            FaceClass::FluidFluid => f[b.unwrap()] - f[a.unwrap()],
            FaceClass::SolidSolid => return,
            _ => {
                if !zero_walls {
                    return;
                }
                // Exactly one side holds a fluid value; the other is zero.
                let fluid = a
                    .filter(|&idx| !grid.cell_solid[idx])
                    .or(b.filter(|&idx| !grid.cell_solid[idx]));
                match fluid {
                    Some(idx) => f[idx],
                    None => return,
                }
            }
        };
        acc += diff.abs().powf(q);
    };
    let u_hi = match grid.topology {
        GridTopology::Physical => n + 1,
        GridTopology::Periodic => n,
    };
    for j in 0..n {
        for i in 0..u_hi {
            let face = grid.u_index(i, j);
            let left = match grid.topology {
                GridTopology::Physical => (i > 0).then(|| grid.cell_index(i - 1, j)),
                GridTopology::Periodic => Some(grid.cell_index((i + n - 1) % n, j)),
            };
            let right = match grid.topology {
                GridTopology::Physical => (i < n).then(|| grid.cell_index(i, j)),
                GridTopology::Periodic => Some(grid.cell_index(i % n, j)),
            };
            add_face(grid.u_class[face], left, right);
        }
    }
    for j in 0..u_hi {
        for i in 0..n {
            let face = grid.v_index(i, j);
            let below = match grid.topology {
                GridTopology::Physical => (j > 0).then(|| grid.cell_index(i, j - 1)),
                GridTopology::Periodic => Some(grid.cell_index(i, (j + n - 1) % n)),
            };
            let above = match grid.topology {
                GridTopology::Physical => (j < n).then(|| grid.cell_index(i, j)),
                GridTopology::Periodic => Some(grid.cell_index(i, j % n)),
            };
            add_face(grid.v_class[face], below, above);
        }
    }
    (weight * acc).powf(1.0 / q)
}

/// Mean over fluid cells.
pub fn fluid_mean(grid: &PerforatedGrid, f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for idx in 0..grid.cell_count() {
        if !grid.cell_solid[idx] {
            acc += f[idx];
        }
    }
    acc / grid.fluid_cells as f64
}
