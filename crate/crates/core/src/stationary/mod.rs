//! The resolvent problem `u + τ A_ε u = F` with
//! `A_ε u = -iΔu - iVu - i a g_ε(u)`.
//!
//! This is both the maximal-monotonicity construction (with `τ = 1`) and the
//! nonlinear solve inside every implicit time step. Newton's method runs on
//! the real-linearisation of `g_ε`, with GMRES for the linear systems and the
//! exact sine-transform inverse of `(σ - iτΔ)` as preconditioner. Relaxed
//! Picard iteration is the fallback and the only route for `ε = 0`.

pub mod dense;
mod krylov;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, DirichletSpectrum, Field, GridSpec, PotentialSpec};
use crate::nonlin::{self, AbsorptionParams};
use krylov::Gmres;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct ResolventProblem {
    pub rhs: Field,
    pub tau: f64,
    pub params: AbsorptionParams,
    pub potential: PotentialSpec,
}

impl ResolventProblem {
    pub fn new(rhs: Field, tau: f64, params: AbsorptionParams, potential: PotentialSpec) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("step weight τ must be positive, got {tau}")));
        }
        if potential.len() != rhs.grid().len() {
            return Err(Error::GridMismatch("potential and right-hand side differ in size".into()));
        }
        Ok(ResolventProblem { rhs, tau, params, potential })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    Picard,
    /// Newton failed and relaxed Picard finished the solve.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Newton, falling back to Picard; Picard alone when `ε = 0`.
    #[default]
    Auto,
    Newton,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Absolute bound on the discrete `L²` residual.
    pub tol: f64,
    pub max_iter: usize,
    pub method: MethodChoice,
    pub gmres_restart: usize,
    pub max_linear_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 60,
            method: MethodChoice::Auto,
            gmres_restart: 40,
            max_linear_iter: 600,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        SolverOptions { tol, max_iter, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual_l2: f64,
    pub method: SolveMethod,
    /// `‖u‖ ≤ ‖F‖ (1 + 1e-10) + tol`: nonexpansivity of the resolvent.
    pub apriori_ok: bool,
}

/// Both sides of `τ Im(a) ∫ (|u|²+ε)^{-(1-m)/2}|u|² + ‖u‖² ≤ ‖F‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBound {
    pub lhs: f64,
    pub rhs: f64,
    /// `Re ∫ F conj(u)`: the lhs equals this exactly for an exact solution.
    pub pairing: f64,
}

impl AprioriBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn apriori_bound(prob: &ResolventProblem, u: &Field) -> AprioriBound {
    let grid = u.grid();
    let p = &prob.params;
    let absorb = nonlin::absorption(grid, u.values(), p.m.value(), p.eps);
    AprioriBound {
        lhs: prob.tau * p.a.im() * absorb + u.mass(),
        rhs: prob.rhs.mass(),
        pairing: prob.rhs.inner(u).re,
    }
}

/// Reusable solver for a fixed grid, step weight, coefficient set and potential.
#[derive(Debug, Clone)]
pub struct ResolventSolver {
    spectrum: Arc<DirichletSpectrum>,
    tau: f64,
    params: AbsorptionParams,
    potential: Vec<f64>,
    potential_mean: f64,
}

impl ResolventSolver {
    pub fn new(grid: Arc<GridSpec>, tau: f64, params: AbsorptionParams, potential: &PotentialSpec) -> Result<Self> {
        Self::with_spectrum(Arc::new(DirichletSpectrum::new(grid)), tau, params, potential)
    }

    pub fn with_spectrum(
        spectrum: Arc<DirichletSpectrum>,
        tau: f64,
        params: AbsorptionParams,
        potential: &PotentialSpec,
    ) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("step weight τ must be positive, got {tau}")));
        }
        if potential.len() != spectrum.grid().len() {
            return Err(Error::GridMismatch("potential does not match the grid".into()));
        }
        let v = potential.total();
        let potential_mean = v.iter().sum::<f64>() / v.len() as f64;
        Ok(ResolventSolver { spectrum, tau, params, potential: v, potential_mean })
    }

    pub fn for_problem(prob: &ResolventProblem) -> Result<Self> {
        Self::new(prob.rhs.grid().clone(), prob.tau, prob.params, &prob.potential)
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.spectrum.grid()
    }

    pub fn params(&self) -> &AbsorptionParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn gmres(&self, opts: &SolverOptions) -> Gmres {
        Gmres {
            weight: self.grid().cell_volume(),
            restart: opts.gmres_restart,
            max_iter: opts.max_linear_iter,
        }
    }

    /// `out = u + τ A_ε u - F`, evaluated at regularisation `eps`.
    fn residual_into(&self, u: &[Complex64], rhs: &[Complex64], eps: f64, out: &mut [Complex64]) {
        grid::laplacian_into(self.grid(), u, out);
        let (m, a, tau) = (self.params.m.value(), self.params.a(), self.tau);
        for j in 0..u.len() {
            let g = nonlin::g_point(u[j], m, eps);
            out[j] = u[j] - I * tau * (out[j] + self.potential[j] * u[j] + a * g) - rhs[j];
        }
    }

    /// `u + τ A_ε u - F` as a field.
    pub fn residual(&self, u: &Field, rhs: &Field) -> Field {
        let mut out = Field::zeros(u.grid().clone());
        self.residual_into(u.values(), rhs.values(), self.params.eps, out.values_mut());
        out
    }

    fn norm(&self, v: &[Complex64]) -> f64 {
        grid::l2_norm(self.grid(), v)
    }

    /// Solves from the zero initial guess.
    pub fn solve(&self, rhs: &Field, opts: &SolverOptions) -> Result<(Field, SolveReport)> {
        self.solve_from(rhs, None, opts)
    }

    pub fn solve_from(&self, rhs: &Field, guess: Option<&Field>, opts: &SolverOptions) -> Result<(Field, SolveReport)> {
        if rhs.grid().len() != self.grid().len() {
            return Err(Error::GridMismatch("right-hand side does not match the solver grid".into()));
        }
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
        }
        let start = match guess {
            Some(g) => {
                rhs.ensure_same_grid(g)?;
                g.values().to_vec()
            }
            None => vec![ZERO; rhs.grid().len()],
        };
        let eps = self.params.eps;
        let outcome = match opts.method {
            MethodChoice::Newton => self.newton(rhs.values(), start, opts),
            MethodChoice::Picard => self.picard(rhs.values(), start, opts).map(|o| o.with_method(SolveMethod::Picard)),
            MethodChoice::Auto if eps == 0.0 => {
                self.picard(rhs.values(), start, opts).map(|o| o.with_method(SolveMethod::Picard))
            }
            MethodChoice::Auto => match self.newton(rhs.values(), start.clone(), opts) {
                Ok(o) => Ok(o),
                Err(Error::IllConditioned(_)) | Err(Error::NonConvergence { .. }) => {
                    // restart Picard from the better of the two candidates
                    self.picard(rhs.values(), start, opts).map(|o| o.with_method(SolveMethod::Hybrid))
                }
                Err(e) => Err(e),
            },
        }?;
        let u = Field::from_values(rhs.grid().clone(), outcome.u)?;
        let apriori_ok = u.l2() <= rhs.l2() * (1.0 + 1e-10) + opts.tol;
        Ok((
            u,
            SolveReport {
                iterations: outcome.iterations,
                linear_iterations: outcome.linear_iterations,
                residual_l2: outcome.residual,
                method: outcome.method,
                apriori_ok,
            },
        ))
    }

    fn newton(&self, rhs: &[Complex64], mut u: Vec<Complex64>, opts: &SolverOptions) -> Result<Outcome> {
        let eps = self.params.eps;
        if eps <= 0.0 {
            return Err(Error::IllConditioned("Newton needs ε > 0; g_0 is not differentiable at 0".into()));
        }
        let n = u.len();
        let (m, a, tau) = (self.params.m.value(), self.params.a(), self.tau);
        let gm = self.gmres(opts);
        let mut r = vec![ZERO; n];
        let mut trial = vec![ZERO; n];
        let mut r_trial = vec![ZERO; n];
        let mut p = vec![0.0; n];
        let mut q = vec![ZERO; n];
        let mut lap = vec![ZERO; n];
        self.residual_into(&u, rhs, eps, &mut r);
        let mut rn = self.norm(&r);
        let mut linear_iterations = 0;

        for iter in 0..=opts.max_iter {
            if rn <= opts.tol {
                return Ok(Outcome { u, iterations: iter, linear_iterations, residual: rn, method: SolveMethod::Newton });
            }
            if iter == opts.max_iter || !rn.is_finite() {
                return Err(Error::NonConvergence { iterations: iter, best_residual: rn });
            }
            let mut shift = ZERO;
            for j in 0..n {
                let (pj, qj) = nonlin::g_linearization(u[j], m, eps);
                p[j] = pj;
                q[j] = qj;
                shift += -I * tau * (self.potential[j] + a * pj);
            }
            let sigma = Complex64::new(1.0, 0.0) + shift / n as f64;
            let neg_r: Vec<Complex64> = r.iter().map(|z| -z).collect();
            let mut w = vec![ZERO; n];
            let inner_tol = (0.1 * opts.tol).max(1e-4 * rn);
            let mut apply = |x: &[Complex64], out: &mut [Complex64]| {
                grid::laplacian_into(self.grid(), x, &mut lap);
                for j in 0..n {
                    let dg = x[j] * p[j] + q[j] * x[j].conj();
                    out[j] = x[j] - I * tau * (lap[j] + self.potential[j] * x[j] + a * dg);
                }
            };
            let mut prec = |z: &mut [Complex64]| self.spectrum.solve_shifted(sigma, -I * tau, z);
            let lin = gm.solve(&mut apply, &mut prec, &neg_r, &mut w, inner_tol);
            linear_iterations += lin.iterations;
            if !lin.converged && !(lin.residual < 0.5 * rn) {
                return Err(Error::IllConditioned(format!(
                    "GMRES stalled at residual {:e} (target {inner_tol:e})",
                    lin.residual
                )));
            }
            // backtracking on the residual norm
            let mut lambda = 1.0;
            loop {
                for j in 0..n {
                    trial[j] = u[j] + w[j] * lambda;
                }
                self.residual_into(&trial, rhs, eps, &mut r_trial);
                let rt = self.norm(&r_trial);
                if rt <= (1.0 - 1e-4 * lambda) * rn || rt <= opts.tol {
                    std::mem::swap(&mut u, &mut trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    rn = rt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return Err(Error::IllConditioned(format!("line search failed at residual {rn:e}")));
                }
            }
        }
        unreachable!()
    }

    /// Relaxed fixed point `u ← u + ω (L⁻¹(F + iτ a g_ε(u)) - u)`, `L = I - iτΔ - iτV`.
    fn picard(&self, rhs: &[Complex64], mut u: Vec<Complex64>, opts: &SolverOptions) -> Result<Outcome> {
        let eps = self.params.eps;
        let n = u.len();
        let (m, a, tau) = (self.params.m.value(), self.params.a(), self.tau);
        let gm = self.gmres(opts);
        let sigma = Complex64::new(1.0, 0.0) - I * tau * self.potential_mean;
        let constant_potential = self.potential.iter().all(|v| *v == self.potential_mean);
        let mut r = vec![ZERO; n];
        let mut lap = vec![ZERO; n];
        let mut trial = vec![ZERO; n];
        let mut r_trial = vec![ZERO; n];
        self.residual_into(&u, rhs, eps, &mut r);
        let mut rn = self.norm(&r);
        let mut omega: f64 = 1.0;
        let mut linear_iterations = 0;
        // Picard may need many sweeps: allow a larger budget than Newton.
        let budget = opts.max_iter.saturating_mul(50).max(200);
        let mut iter = 0;
        let mut v = vec![ZERO; n];
        loop {
            if rn <= opts.tol {
                return Ok(Outcome { u, iterations: iter, linear_iterations, residual: rn, method: SolveMethod::Picard });
            }
            if iter >= budget || !rn.is_finite() || omega < 1e-10 {
                return Err(Error::NonConvergence { iterations: iter, best_residual: rn });
            }
            iter += 1;
            let source: Vec<Complex64> =
                (0..n).map(|j| rhs[j] + I * tau * a * nonlin::g_point(u[j], m, eps)).collect();
            if constant_potential {
                v.copy_from_slice(&source);
                self.spectrum.solve_shifted(sigma, -I * tau, &mut v);
            } else {
                v.copy_from_slice(&u);
                let mut apply = |x: &[Complex64], out: &mut [Complex64]| {
                    grid::laplacian_into(self.grid(), x, &mut lap);
                    for j in 0..n {
                        out[j] = x[j] - I * tau * (lap[j] + self.potential[j] * x[j]);
                    }
                };
                let mut prec = |z: &mut [Complex64]| self.spectrum.solve_shifted(sigma, -I * tau, z);
                let lin = gm.solve(&mut apply, &mut prec, &source, &mut v, 0.01 * opts.tol);
                linear_iterations += lin.iterations;
                if !lin.converged {
                    return Err(Error::IllConditioned(format!(
                        "linear Picard solve stalled at residual {:e}",
                        lin.residual
                    )));
                }
            }
            loop {
                for j in 0..n {
                    trial[j] = u[j] + (v[j] - u[j]) * omega;
                }
                self.residual_into(&trial, rhs, eps, &mut r_trial);
                let rt = self.norm(&r_trial);
                if rt < rn {
                    std::mem::swap(&mut u, &mut trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    rn = rt;
                    omega = (omega * 1.5).min(1.0);
                    break;
                }
                omega *= 0.5;
                if omega < 1e-10 {
                    break;
                }
            }
        }
    }
}

struct Outcome {
    u: Vec<Complex64>,
    iterations: usize,
    linear_iterations: usize,
    residual: f64,
    method: SolveMethod,
}

impl Outcome {
    fn with_method(mut self, m: SolveMethod) -> Self {
        self.method = m;
        self
    }
}

/// Solves `u + τ A_ε u = F` to `‖residual‖₂ ≤ tol`.
pub fn resolvent_solve(prob: &ResolventProblem, tol: f64, max_iter: usize) -> Result<(Field, SolveReport)> {
    let solver = ResolventSolver::for_problem(prob)?;
    solver.solve(&prob.rhs, &SolverOptions::with_tol(tol, max_iter))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationStage {
    pub eps: f64,
    pub report: SolveReport,
    /// `‖u_{ε_n} - u_{ε_{n-1}}‖₂`; absent for the first stage.
    pub increment: Option<f64>,
}

/// Solves along a decreasing schedule `ε_0 > ε_1 > … ≥ 0`, warm-starting each stage.
pub fn eps_continuation(
    prob: &ResolventProblem,
    schedule: &[f64],
    opts: &SolverOptions,
) -> Result<(Field, Vec<ContinuationStage>)> {
    if schedule.is_empty() || !(schedule[0] > 0.0) {
        return Err(Error::InvalidParameter("continuation needs ε_0 > 0".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|e| *e < 0.0) {
        return Err(Error::InvalidParameter(
            "continuation schedule must be strictly decreasing and nonnegative".into(),
        ));
    }
    let grid = prob.rhs.grid().clone();
    let spectrum = Arc::new(DirichletSpectrum::new(grid));
    let mut stages = Vec::with_capacity(schedule.len());
    let mut current: Option<Field> = None;
    for (stage, &eps) in schedule.iter().enumerate() {
        let params = prob.params.with_eps(eps)?;
        let solver = ResolventSolver::with_spectrum(spectrum.clone(), prob.tau, params, &prob.potential)?;
        let (u, report) = solver
            .solve_from(&prob.rhs, current.as_ref(), opts)
            .map_err(|e| Error::Continuation { stage, source: Box::new(e) })?;
        let increment = current.as_ref().map(|prev| u.sub(prev).map(|d| d.l2())).transpose()?;
        stages.push(ContinuationStage { eps, report, increment });
        current = Some(u);
    }
    Ok((current.expect("schedule is nonempty"), stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_dm_coefficient, Exponent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(m: f64, re: f64, eps: f64) -> AbsorptionParams {
        let mm = Exponent::new(m).unwrap();
        AbsorptionParams::new(mm, make_dm_coefficient(mm, re).unwrap(), eps).unwrap()
    }

    fn random_rhs(grid: &Arc<GridSpec>, rng: &mut ChaCha8Rng, scale: f64) -> Field {
        Field::from_values(
            grid.clone(),
            (0..grid.len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Arc::new(GridSpec::cube(1, 1.0, 8).unwrap());
        let prob = ResolventProblem::new(Field::zeros(g.clone()), 1.0, params(0.5, 1.0, 1e-3), PotentialSpec::zero(&g)).unwrap();
        let (u, rep) = resolvent_solve(&prob, 1e-10, 20).unwrap();
        assert!(rep.iterations <= 1);
        assert!(u.values().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn rejects_bad_problems() {
        let g = Arc::new(GridSpec::cube(1, 1.0, 8).unwrap());
        let other = GridSpec::cube(1, 1.0, 5).unwrap();
        assert!(ResolventProblem::new(Field::zeros(g.clone()), 0.0, params(0.5, 1.0, 1e-3), PotentialSpec::zero(&g)).is_err());
        assert!(ResolventProblem::new(Field::zeros(g), 1.0, params(0.5, 1.0, 1e-3), PotentialSpec::zero(&other)).is_err());
    }

    #[test]
    fn newton_and_picard_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = Arc::new(GridSpec::cube(1, 1.0, 16).unwrap());
        let pot = PotentialSpec::from_parts(&g, (0..16).map(|_| rng.random_range(-2.0..2.0)).collect(), vec![0.0; 16], None).unwrap();
        for _ in 0..5 {
            let f = random_rhs(&g, &mut rng, 1.0);
            let solver = ResolventSolver::new(g.clone(), 0.01, params(0.5, 1.0, 1e-2), &pot).unwrap();
            let tol = 1e-10;
            let newton = SolverOptions { method: MethodChoice::Newton, ..SolverOptions::with_tol(tol, 50) };
            let picard = SolverOptions { method: MethodChoice::Picard, ..SolverOptions::with_tol(tol, 50) };
            let (un, rn) = solver.solve(&f, &newton).unwrap();
            let (up, rp) = solver.solve(&f, &picard).unwrap();
            assert_eq!(rn.method, SolveMethod::Newton);
            assert_eq!(rp.method, SolveMethod::Picard);
            assert!(un.sub(&up).unwrap().l2() <= 10.0 * tol);
        }
    }

    #[test]
    fn picard_handles_unregularised_law() {
        let g = Arc::new(GridSpec::cube(1, 1.0, 12).unwrap());
        let f = Field::from_fn(g.clone(), |x| Complex64::new((std::f64::consts::PI * x[0]).sin() + 2.0, 0.3));
        let prob = ResolventProblem::new(f.clone(), 0.01, params(0.5, 1.0, 0.0), PotentialSpec::zero(&g)).unwrap();
        let (u, rep) = resolvent_solve(&prob, 1e-10, 50).unwrap();
        assert_eq!(rep.method, SolveMethod::Picard);
        assert!(rep.apriori_ok);
        let solver = ResolventSolver::for_problem(&prob).unwrap();
        assert!(solver.residual(&u, &f).l2() <= 1e-10);
        let newton = SolverOptions { method: MethodChoice::Newton, ..SolverOptions::with_tol(1e-10, 20) };
        assert!(matches!(solver.solve(&f, &newton), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn pairing_identity_and_apriori_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Arc::new(GridSpec::new(&[1.0, 1.5], &[7, 9]).unwrap());
        for tau in [0.05, 1.0] {
            let f = random_rhs(&g, &mut rng, 2.0);
            let prob = ResolventProblem::new(f, tau, params(0.3, 2.0, 1e-4), PotentialSpec::constant(&g, -3.0)).unwrap();
            let (u, rep) = resolvent_solve(&prob, 1e-11, 50).unwrap();
            assert!(rep.apriori_ok);
            let b = apriori_bound(&prob, &u);
            assert!(b.holds(1e-9));
            assert!((b.lhs - b.pairing).abs() < 1e-9 * (1.0 + b.rhs));
        }
    }

    #[test]
    fn continuation_single_stage_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Arc::new(GridSpec::cube(1, 1.0, 10).unwrap());
        let prob = ResolventProblem::new(random_rhs(&g, &mut rng, 1.0), 1.0, params(0.5, 1.0, 1e-3), PotentialSpec::zero(&g)).unwrap();
        let opts = SolverOptions::with_tol(1e-11, 50);
        let (u1, stages) = eps_continuation(&prob, &[1e-3], &opts).unwrap();
        let (u2, _) = ResolventSolver::for_problem(&prob).unwrap().solve(&prob.rhs, &opts).unwrap();
        assert_eq!(stages.len(), 1);
        assert!(stages[0].increment.is_none());
        assert!(u1.sub(&u2).unwrap().l2() < 1e-12);
        assert!(eps_continuation(&prob, &[1e-3, 1e-2], &opts).is_err());
        assert!(eps_continuation(&prob, &[0.0], &opts).is_err());
    }
}
