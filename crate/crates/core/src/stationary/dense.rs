//! Dense reference solver for small resolvent problems.
//!
//! Assembles the real `2n × 2n` Jacobian of `u + τ A_ε u - F` from explicit
//! real-variable derivatives of `g_ε` and an independently built Laplacian
//! matrix, then runs Newton with LU factorisation. Only meant for grids of
//! at most [`MAX_NODES`] nodes; it exists to cross-check the iterative solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

use super::ResolventProblem;

pub const MAX_NODES: usize = 64;

/// Five-point (or 2N+1-point) Dirichlet Laplacian as a dense real matrix.
pub fn laplacian_matrix(grid: &GridSpec) -> DMatrix<f64> {
    let n = grid.len();
    let mut lap = DMatrix::zeros(n, n);
    for j in 0..n {
        let idx = grid.multi_index(j);
        for axis in 0..grid.dim() {
            let h2 = grid.spacing(axis).powi(2);
            let s = grid.stride(axis);
            lap[(j, j)] -= 2.0 / h2;
            if idx[axis] > 0 {
                lap[(j, j - s)] += 1.0 / h2;
            }
            if idx[axis] + 1 < grid.counts()[axis] {
                lap[(j, j + s)] += 1.0 / h2;
            }
        }
    }
    lap
}

/// `g_ε = φ(x²+y²) (x, y)` with `φ(s) = (s+ε)^{-(1-m)/2}`; returns
/// `(gx, gy, ∂gx/∂x, ∂gx/∂y, ∂gy/∂y)`.
fn real_g(x: f64, y: f64, m: f64, eps: f64) -> (f64, f64, f64, f64, f64) {
    let s = x * x + y * y + eps;
    let k = -(1.0 - m) / 2.0;
    let phi = s.powf(k);
    let dphi = k * s.powf(k - 1.0);
    (phi * x, phi * y, phi + 2.0 * dphi * x * x, 2.0 * dphi * x * y, phi + 2.0 * dphi * y * y)
}

/// Unknowns ordered `(x_0, y_0, x_1, y_1, …)`.
fn residual(prob: &ResolventProblem, lap: &DMatrix<f64>, v: &[f64], z: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let (m, eps, tau) = (prob.params.m.value(), prob.params.eps, prob.tau);
    let a = prob.params.a();
    let (ar, ai) = (a.re, a.im);
    let xs = DVector::from_iterator(n, (0..n).map(|j| z[2 * j]));
    let ys = DVector::from_iterator(n, (0..n).map(|j| z[2 * j + 1]));
    let lx = lap * &xs;
    let ly = lap * &ys;
    let f = prob.rhs.values();
    let mut out = DVector::zeros(2 * n);
    for j in 0..n {
        let (gx, gy, ..) = real_g(xs[j], ys[j], m, eps);
        // u - iτ(Δu + V u + a g): real part gains τ·Im(...), imaginary part loses τ·Re(...)
        let re_inner = lx[j] + v[j] * xs[j] + ar * gx - ai * gy;
        let im_inner = ly[j] + v[j] * ys[j] + ar * gy + ai * gx;
        out[2 * j] = xs[j] + tau * im_inner - f[j].re;
        out[2 * j + 1] = ys[j] - tau * re_inner - f[j].im;
    }
    out
}

fn jacobian(prob: &ResolventProblem, lap: &DMatrix<f64>, v: &[f64], z: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let (m, eps, tau) = (prob.params.m.value(), prob.params.eps, prob.tau);
    let a = prob.params.a();
    let (ar, ai) = (a.re, a.im);
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let l = lap[(j, k)];
            if l != 0.0 {
                jac[(2 * j, 2 * k + 1)] += tau * l;
                jac[(2 * j + 1, 2 * k)] -= tau * l;
            }
        }
        let (_, _, gxx, gxy, gyy) = real_g(z[2 * j], z[2 * j + 1], m, eps);
        // im_inner = ... + v y + ar gy + ai gx ; re_inner = ... + v x + ar gx - ai gy
        let dim_dx = ar * gxy + ai * gxx;
        let dim_dy = v[j] + ar * gyy + ai * gxy;
        let dre_dx = v[j] + ar * gxx - ai * gxy;
        let dre_dy = ar * gxy - ai * gyy;
        jac[(2 * j, 2 * j)] += 1.0 + tau * dim_dx;
        jac[(2 * j, 2 * j + 1)] += tau * dim_dy;
        jac[(2 * j + 1, 2 * j)] -= tau * dre_dx;
        jac[(2 * j + 1, 2 * j + 1)] += 1.0 - tau * dre_dy;
    }
    jac
}

/// Newton with dense LU on the real formulation, residual norm measured in
/// the grid's discrete `L²`.
pub fn dense_oracle_solve(prob: &ResolventProblem, tol: f64, max_iter: usize) -> Result<Field> {
    let grid = prob.rhs.grid().clone();
    let n = grid.len();
    if n > MAX_NODES {
        return Err(Error::InvalidParameter(format!("dense oracle limited to {MAX_NODES} nodes, got {n}")));
    }
    if !(prob.params.eps > 0.0) {
        return Err(Error::InvalidParameter("dense oracle needs ε > 0".into()));
    }
    let lap = laplacian_matrix(&grid);
    let v = prob.potential.total();
    let scale = grid.cell_volume().sqrt();
    let mut z = DVector::zeros(2 * n);
    let mut r = residual(prob, &lap, &v, &z);
    for iter in 0..=max_iter {
        let rn = scale * r.norm();
        if rn <= tol {
            let values = (0..n).map(|j| Complex64::new(z[2 * j], z[2 * j + 1])).collect();
            return Field::from_values(grid, values);
        }
        if iter == max_iter {
            return Err(Error::NonConvergence { iterations: iter, best_residual: rn });
        }
        let step = jacobian(prob, &lap, &v, &z)
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::IllConditioned("singular dense Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial = &z + &step * lambda;
            let rt = residual(prob, &lap, &v, &trial);
            if scale * rt.norm() < rn || lambda < 1e-8 {
                z = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_dm_coefficient, Exponent};
    use crate::grid;
    use crate::nonlin::AbsorptionParams;
    use crate::stationary::{resolvent_solve, ResolventSolver};
    use crate::PotentialSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn laplacian_matrix_matches_stencil() {
        let g = GridSpec::new(&[1.0, 2.0], &[4, 5]).unwrap();
        let lap = laplacian_matrix(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<Complex64> = (0..g.len()).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        grid::laplacian_into(&g, &u, &mut out);
        for j in 0..g.len() {
            let re: f64 = (0..g.len()).map(|k| lap[(j, k)] * u[k].re).sum();
            let im: f64 = (0..g.len()).map(|k| lap[(j, k)] * u[k].im).sum();
            assert!((out[j] - Complex64::new(re, im)).norm() < 1e-9);
        }
    }

    #[test]
    fn agrees_with_iterative_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = Exponent::new(0.4).unwrap();
        let g = Arc::new(GridSpec::cube(1, 1.0, 12).unwrap());
        let params = AbsorptionParams::new(m, make_dm_coefficient(m, 1.5).unwrap(), 1e-6).unwrap();
        let f = Field::from_values(
            g.clone(),
            (0..12).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        )
        .unwrap();
        let prob = ResolventProblem::new(f, 0.5, params, PotentialSpec::constant(&g, 2.0)).unwrap();
        let dense = dense_oracle_solve(&prob, 1e-12, 80).unwrap();
        let (it, _) = resolvent_solve(&prob, 1e-12, 80).unwrap();
        assert!(dense.sub(&it).unwrap().l2() < 1e-10);
        let solver = ResolventSolver::for_problem(&prob).unwrap();
        assert!(solver.residual(&dense, &prob.rhs).l2() < 1e-11);
    }
}
