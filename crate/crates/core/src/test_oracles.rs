//! Test-only dense linear algebra oracles, independent of the sparse solvers.

/// Dense Gaussian elimination with partial pivoting; `a` is row-major n x n.
pub fn dense_solve(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m[r * n + col].abs() > m[pivot * n + col].abs() {
                pivot = r;
            }
        }
        assert!(m[pivot * n + col].abs() > 1e-300, "singular dense system");
        if pivot != col {
            for c in 0..n {
                m.swap(col * n + c, pivot * n + c);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for c in col + 1..n {
            acc -= m[col * n + c] * x[c];
        }
        x[col] = acc / m[col * n + col];
    }
    x
}

/// Solve the saddle system `[A D^T; D 0] [u; q] = [f; 0]` densely, with the
/// pressure mean pinned by augmenting the system with a Lagrange multiplier
/// for `sum q = 0`. Returns `(u, p)` where `p = -q` matches the convention
/// `A u - D^T p = f`.
pub fn dense_kkt_solve(
    a: &crate::solver::SparseOperator,
    div: &crate::solver::SparseOperator,
    f: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let nu = a.rows;
    let np = div.rows;
    let n = nu + np + 1;
    let mut m = vec![0.0; n * n];
    for r in 0..nu {
        for k in a.indptr[r]..a.indptr[r + 1] {
            m[r * n + a.indices[k] as usize] = a.values[k];
        }
    }
    for r in 0..np {
        for k in div.indptr[r]..div.indptr[r + 1] {
            let c = div.indices[k] as usize;
            m[(nu + r) * n + c] = div.values[k];
            m[c * n + nu + r] = div.values[k];
        }
        m[(nu + r) * n + nu + np] = 1.0;
        m[(nu + np) * n + nu + r] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[..nu].copy_from_slice(f);
    let sol = dense_solve(&m, &rhs, n);
    let u = sol[..nu].to_vec();
    let p: Vec<f64> = sol[nu..nu + np].iter().map(|q| -q).collect();
    (u, p)
}

/// Classical fixed-step RK4 integrator for small ODE systems, used as an
/// independent time-integration oracle.
pub fn rk4_integrate<F>(mut y: Vec<f64>, t0: f64, t1: f64, steps: usize, f: F) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let dt = (t1 - t0) / steps as f64;
    let mut t = t0;
    for _ in 0..steps {
        let k1 = f(t, &y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = f(t + 0.5 * dt, &y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = f(t + 0.5 * dt, &y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = f(t + dt, &y4);
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += dt;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_inverts_small_system() {
        let a = [4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0];
        let x_true = [1.0, -2.0, 3.0];
        let b = [
            4.0 * 1.0 + 1.0 * -2.0,
            1.0 - 6.0 + 3.0,
            0.0 - 2.0 + 6.0,
        ];
        let x = dense_solve(&a, &b, 3);
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_matches_exponential() {
        let y = rk4_integrate(vec![1.0], 0.0, 1.0, 1000, |_, y| vec![y[0]]);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-10);
    }
}
