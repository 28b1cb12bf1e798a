//! Unit-cell problems and effective tensors.
//!
//! Two auxiliary problems are solved on the periodic unit cell:
//! - scalar correctors `chi_1, chi_2`: harmonic on the fluid part, with the
//!   flux of `chi_i + y_i` through obstacle faces equal to zero, periodic,
//!   fluid-mean free;
//! - Stokes cell fields `omega^1, omega^2` with unit body force `e^i`,
//!   no-slip on the obstacle, periodic, with mean-free pressures `pi^i`.
//!
//! The diffusivity tensor contracts gradients of `psi_i = y_i + chi_i`; the
//! permeability tensor contracts gradients of `omega^i`, with the mean-value
//! form `K_ij = (1/|Y|) int e^j . omega^i` as a cross-check. All quadratures
//! are the exact discrete energies of the solves, so the identities hold to
//! solver tolerance.

use serde::Serialize;

use crate::geometry::{
    analytic_theta, build_unit_cell_grid, FaceClass, FaceField, GridTopology, ObstacleShape,
    PerforatedGrid,
};
use crate::ops::{
    self, build_divergence, build_fluid_graph_laplacian, build_velocity_laplacian, PressureMap,
    VelocityMap,
};
use crate::solver::{cg_solve_op, Nullspace, SolveConfig};
use crate::{Error, Result};

/// Effective tensors of one obstacle shape at one cell resolution.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveTensors {
    pub theta: f64,
    #[serde(rename = "A")]
    pub a: [[f64; 2]; 2],
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<[[f64; 2]; 2]>,
    #[serde(rename = "B_alt", skip_serializing_if = "Option::is_none")]
    pub b_alt: Option<[[f64; 2]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_mean: Option<[[f64; 2]; 2]>,
    pub n: usize,
    pub shape: ObstacleShape,
}

/// Solutions of both auxiliary problems on one grid.
#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Scalar correctors as full-length cell fields (zero on solid cells).
    pub chi: [Vec<f64>; 2],
    /// Stokes velocities, zero on obstacle and solid faces.
    pub omega: [FaceField; 2],
    /// Mean-free cell pressures of the Stokes problems.
    pub pi: [Vec<f64>; 2],
}

fn require_periodic(grid: &PerforatedGrid) {
    assert!(
        grid.topology == GridTopology::Periodic,
        "cell problems are posed on the periodic unit cell"
    );
}

/// Right-hand side of the corrector problem for axis `axis`: each fluid cell
/// receives `h * sum over its FLUID_SOLID faces of -(outward normal . e^axis)`.
fn chi_rhs(grid: &PerforatedGrid, pmap: &PressureMap, axis: usize) -> Vec<f64> {
    let n = grid.nx;
    let h = grid.h;
    let mut rhs = vec![0.0; pmap.len()];
    for (row, &cell) in pmap.cells.iter().enumerate() {
        let (i, j) = ((cell as usize) % n, (cell as usize) / n);
        if axis == 0 {
            if grid.u_class[grid.u_index(i, j)] == FaceClass::FluidSolid {
                rhs[row] += h; // west face, outward normal -e1
            }
            if grid.u_class[grid.u_index(i + 1, j)] == FaceClass::FluidSolid {
                rhs[row] -= h; // east face, outward normal +e1
            }
        } else {
            if grid.v_class[grid.v_index(i, j)] == FaceClass::FluidSolid {
                rhs[row] += h;
            }
            if grid.v_class[grid.v_index(i, j + 1)] == FaceClass::FluidSolid {
                rhs[row] -= h;
            }
        }
    }
    rhs
}

/// Solve both scalar corrector problems; returns full-length cell fields.
pub fn solve_scalar_cell(grid: &PerforatedGrid, cfg: &SolveConfig) -> Result<[Vec<f64>; 2]> {
    require_periodic(grid);
    let pmap = PressureMap::build(grid);
    let laplacian = build_fluid_graph_laplacian(grid, &pmap);
    let cfg = cfg.with_nullspace(Nullspace::Constants);
    let solve_axis = |axis: usize| -> Result<Vec<f64>> {
        let rhs = chi_rhs(grid, &pmap, axis);
        let total: f64 = rhs.iter().sum();
        if total.abs() > 1e-12 {
            return Err(Error::IncompatibleRhs(total.abs()));
        }
        let sol = cg_solve_op(&laplacian, &rhs, None, &cfg, 0.0)?;
        let mut field = vec![0.0; grid.cell_count()];
        pmap.scatter(&sol.x, &mut field);
        Ok(field)
    };
    let (chi1, chi2) = rayon::join(|| solve_axis(0), || solve_axis(1));
    Ok([chi1?, chi2?])
}

/// Assemble the diffusivity tensor from `psi_i = y_i + chi_i` face gradients.
///
/// Returns the symmetrised tensor and the raw asymmetry `|a12 - a21|`.
pub fn assemble_a(grid: &PerforatedGrid, chi: &[Vec<f64>; 2]) -> ([[f64; 2]; 2], f64) {
    require_periodic(grid);
    let n = grid.nx;
    let h = grid.h;
    let h2 = h * h;
    let mut a = [[0.0; 2]; 2];
    // psi gradient samples at FLUID_FLUID faces: the linear part contributes
    // the exact unit component along the face normal.
    for j in 0..n {
        for i in 0..n {
            let face = grid.u_index(i, j);
            if grid.u_class[face] == FaceClass::FluidFluid {
                let left = grid.cell_index((i + n - 1) % n, j);
                let right = grid.cell_index(i, j);
                let g = [
                    1.0 + (chi[0][right] - chi[0][left]) / h,
                    (chi[1][right] - chi[1][left]) / h,
                ];
                for p in 0..2 {
                    for q in 0..2 {
                        a[p][q] += h2 * g[p] * g[q];
                    }
                }
            }
            let face = grid.v_index(i, j);
            if grid.v_class[face] == FaceClass::FluidFluid {
                let below = grid.cell_index(i, (j + n - 1) % n);
                let above = grid.cell_index(i, j);
                let g = [
                    (chi[0][above] - chi[0][below]) / h,
                    1.0 + (chi[1][above] - chi[1][below]) / h,
                ];
                for p in 0..2 {
                    for q in 0..2 {
                        a[p][q] += h2 * g[p] * g[q];
                    }
                }
            }
        }
    }
    let asym = (a[0][1] - a[1][0]).abs();
    let off = 0.5 * (a[0][1] + a[1][0]);
    a[0][1] = off;
    a[1][0] = off;
    (a, asym)
}

/// Solve both Stokes cell problems with unit body forces.
pub fn solve_stokes_cell(
    grid: &PerforatedGrid,
    cfg: &SolveConfig,
) -> Result<([FaceField; 2], [Vec<f64>; 2])> {
    require_periodic(grid);
    if grid.spec.shape.is_none() {
        return Err(Error::DegenerateCell);
    }
    let vmap = VelocityMap::build(grid);
    let pmap = PressureMap::build(grid);
    let laplacian = build_velocity_laplacian(grid, &vmap);
    let divergence = build_divergence(grid, &vmap, &pmap);
    let solve_axis = |axis: usize| -> Result<(FaceField, Vec<f64>)> {
        let mut rhs = vec![0.0; vmap.total];
        if axis == 0 {
            rhs[..vmap.n_u].fill(1.0);
        } else {
            rhs[vmap.n_u..].fill(1.0);
        }
        let sol = crate::solver::stokes_saddle_solve(&laplacian, &divergence, &rhs, grid.h, cfg, None)?;
        let omega = vmap.scatter(&sol.u, grid);
        let mut pressure = vec![0.0; grid.cell_count()];
        pmap.scatter(&sol.p, &mut pressure);
        Ok((omega, pressure))
    };
    let (sol1, sol2) = rayon::join(|| solve_axis(0), || solve_axis(1));
    let (omega1, pi1) = sol1?;
    let (omega2, pi2) = sol2?;
    Ok(([omega1, omega2], [pi1, pi2]))
}

/// Assemble the permeability tensor, its mean-value form and the cell means
/// of `omega^i`. Returns `(b, b_alt, omega_mean, raw_asymmetry)`.
pub fn assemble_b(
    grid: &PerforatedGrid,
    omega: &[FaceField; 2],
) -> ([[f64; 2]; 2], [[f64; 2]; 2], [[f64; 2]; 2], f64) {
    require_periodic(grid);
    let h2 = grid.h * grid.h;
    let mut b = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            b[i][j] = ops::velocity_grad_inner(grid, &omega[i], &omega[j]);
        }
    }
    let mut omega_mean = [[0.0; 2]; 2];
    for i in 0..2 {
        omega_mean[i][0] = h2 * omega[i].u.iter().sum::<f64>();
        omega_mean[i][1] = h2 * omega[i].v.iter().sum::<f64>();
    }
    let b_alt = omega_mean;
    let asym = (b[0][1] - b[1][0]).abs();
    let off = 0.5 * (b[0][1] + b[1][0]);
    b[0][1] = off;
    b[1][0] = off;
    (b, b_alt, omega_mean, asym)
}

/// Eigenvalues of a symmetric 2x2 tensor.
pub fn sym_eigenvalues(t: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = t[0][0] + t[1][1];
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

fn max_abs(t: &[[f64; 2]; 2]) -> f64 {
    t.iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Run both cell problems at resolution `n` and assemble all tensors, with
/// the type invariants verified.
pub fn compute_effective_tensors(
    shape: ObstacleShape,
    n: usize,
    cfg: &SolveConfig,
) -> Result<EffectiveTensors> {
    let grid = build_unit_cell_grid(n, shape)?;
    let chi = solve_scalar_cell(&grid, cfg)?;
    let (a, _a_asym) = assemble_a(&grid, &chi);
    let theta = analytic_theta(&shape);

    if shape.is_none() {
        let identity = [[1.0, 0.0], [0.0, 1.0]];
        if a != identity {
            return Err(Error::InvariantViolation(format!(
                "obstacle-free diffusivity deviates from identity: {a:?}"
            )));
        }
        return Ok(EffectiveTensors {
            theta,
            a,
            b: None,
            b_alt: None,
            omega_mean: None,
            n,
            shape,
        });
    }

    let (omega, _pi) = solve_stokes_cell(&grid, cfg)?;
    let (b, b_alt, omega_mean, _b_asym) = assemble_b(&grid, &omega);

    let (a_min, _) = sym_eigenvalues(&a);
    if a_min <= 0.0 {
        return Err(Error::InvariantViolation(format!(
            "diffusivity tensor not positive definite (min eigenvalue {a_min:.3e})"
        )));
    }
    let (b_min, _) = sym_eigenvalues(&b);
    if b_min <= 0.0 {
        return Err(Error::InvariantViolation(format!(
            "permeability tensor not positive definite (min eigenvalue {b_min:.3e})"
        )));
    }
    let mut diff = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            diff = diff.max((b[i][j] - b_alt[i][j]).abs());
        }
    }
    if diff > 1e-5 * max_abs(&b) {
        return Err(Error::InvariantViolation(format!(
            "permeability forms disagree: |B - B_alt| = {diff:.3e}"
        )));
    }
    Ok(EffectiveTensors {
        theta,
        a,
        b: Some(b),
        b_alt: Some(b_alt),
        omega_mean: Some(omega_mean),
        n,
        shape,
    })
}
