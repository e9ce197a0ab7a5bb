//! Restarted, right-preconditioned GMRES over the reals.
//!
//! Vectors are stored as complex arrays but the operator only needs to be
//! real-linear: the inner product is `Re Σ x conj(y)` scaled by the grid's
//! cell volume, so `C^n` is treated as `R^{2n}`. This is what the Newton
//! linearisation of `g_ε` requires, since `w ↦ conj(w)` terms are not
//! complex-linear.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub(crate) struct Gmres {
    pub weight: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Gmres {
    fn dot(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        self.weight * a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>()
    }

    fn norm(&self, a: &[Complex64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Solves `A x = b` starting from the contents of `x`, stopping once the
    /// true residual norm is at most `tol`.
    pub fn solve(
        &self,
        apply: &mut dyn FnMut(&[Complex64], &mut [Complex64]),
        precondition: &mut dyn FnMut(&mut [Complex64]),
        b: &[Complex64],
        x: &mut [Complex64],
        tol: f64,
    ) -> GmresOutcome {
        let n = b.len();
        let restart = self.restart.max(1);
        let mut r = vec![Complex64::new(0.0, 0.0); n];
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        let mut h = vec![0.0; (restart + 1) * restart];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        let mut total = 0;

        loop {
            apply(x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let beta = self.norm(&r);
            if beta <= tol || total >= self.max_iter || !beta.is_finite() {
                return GmresOutcome {
                    iterations: total,
                    residual: beta,
                    converged: beta <= tol,
                };
            }
            basis.clear();
            basis.push(r.iter().map(|z| z / beta).collect());
            g.iter_mut().for_each(|v| *v = 0.0);
            g[0] = beta;
            let mut k = 0;
            while k < restart && total < self.max_iter {
                let mut z = basis[k].clone();
                precondition(&mut z);
                apply(&z, &mut w);
                for (i, v) in basis.iter().enumerate() {
                    let hij = self.dot(&w, v);
                    h[i * restart + k] = hij;
                    for (wj, vj) in w.iter_mut().zip(v) {
                        *wj -= vj * hij;
                    }
                }
                let hnext = self.norm(&w);
                h[(k + 1) * restart + k] = hnext;
                for i in 0..k {
                    let (a, bb) = (h[i * restart + k], h[(i + 1) * restart + k]);
                    h[i * restart + k] = cs[i] * a + sn[i] * bb;
                    h[(i + 1) * restart + k] = -sn[i] * a + cs[i] * bb;
                }
                let (a, bb) = (h[k * restart + k], h[(k + 1) * restart + k]);
                let rho = a.hypot(bb);
                if rho == 0.0 {
                    break;
                }
                cs[k] = a / rho;
                sn[k] = bb / rho;
                h[k * restart + k] = rho;
                h[(k + 1) * restart + k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                total += 1;
                k += 1;
                if g[k].abs() <= 0.5 * tol || hnext == 0.0 {
                    break;
                }
                basis.push(w.iter().map(|z| z / hnext).collect());
            }
            // back substitution for the Krylov coefficients
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let mut s = g[i];
                for j in i + 1..k {
                    s -= h[i * restart + j] * y[j];
                }
                y[i] = s / h[i * restart + i];
            }
            let mut update = vec![Complex64::new(0.0, 0.0); n];
            for (yi, v) in y.iter().zip(&basis) {
                for (u, vj) in update.iter_mut().zip(v) {
                    *u += vj * yi;
                }
            }
            precondition(&mut update);
            for (xi, ui) in x.iter_mut().zip(&update) {
                *xi += ui;
            }
            if k == 0 {
                apply(x, &mut r);
                let res = self.norm(&r.iter().zip(b).map(|(a, bb)| bb - a).collect::<Vec<_>>());
                return GmresOutcome {
                    iterations: total,
                    residual: res,
                    converged: res <= tol,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_real_linear_system_with_conjugation() {
        // A w = (2 + i) w + 0.5 conj(w) + shift of neighbours: real-linear only
        let n = 30;
        let b: Vec<Complex64> = (0..n).map(|j| Complex64::new((j as f64).sin(), (j as f64 * 0.3).cos())).collect();
        let mut apply = |x: &[Complex64], out: &mut [Complex64]| {
            for j in 0..n {
                let mut v = x[j] * Complex64::new(2.0, 1.0) + 0.5 * x[j].conj();
                if j > 0 {
                    v -= 0.3 * x[j - 1];
                }
                if j + 1 < n {
                    v -= 0.3 * x[j + 1];
                }
                out[j] = v;
            }
        };
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        let solver = Gmres { weight: 1.0, restart: 10, max_iter: 500 };
        let out = solver.solve(&mut apply, &mut |_| {}, &b, &mut x, 1e-12);
        assert!(out.converged, "{out:?}");
        let mut ax = vec![Complex64::new(0.0, 0.0); n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, bb)| (a - bb).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-11);
    }
}
