//! Implicit-Euler time integration with an exact discrete mass ledger.
//!
//! One step solves `i(u⁺ - u)/Δt + Δu⁺ + V u⁺ + a g_ε(u⁺) = f(t + Δt)`, which
//! rearranges to the resolvent problem `u⁺ + Δt A_ε u⁺ = u - iΔt f(t + Δt)`.
//! Pairing the step with `u⁺` gives, with no truncation error,
//!
//! ```text
//! ½(‖u⁺‖² - ‖u‖²) + ½‖u⁺ - u‖² + Δt Im(a) ∫ (|u⁺|²+ε)^{-(1-m)/2}|u⁺|² = Δt Im ∫ f conj(u⁺),
//! ```
//!
//! so the ledger's `identity_residual` only measures the nonlinear solve.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, DirichletSpectrum, Field, GridSpec, PotentialSpec};
use crate::nonlin::{self, AbsorptionParams};
use crate::stationary::{ResolventSolver, SolveMethod, SolverOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// States with mass below this are replaced by exactly zero.
pub const SNAP_TO_ZERO_MASS: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// `steps = round(horizon / dt)`.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be nonnegative, got {horizon}")));
        }
        Self::new(dt, (horizon / dt).round() as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }
}

/// Regularity class of the forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ForcingClass {
    /// `L¹(0, ∞; L²)`.
    #[default]
    L1L2,
    /// `W^{1,1}(0, ∞; L²)`.
    W11L2,
    /// `L¹(0, ∞; H¹₀)`.
    H10,
}

/// Time modulation of a separable forcing `f(t, x) = θ(t) φ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Temporal {
    Constant,
    /// `e^{iωt}`.
    Oscillating { omega: f64 },
    /// `e^{-λt}`.
    Decaying { rate: f64 },
    /// `(T0 - t)_+^p`; needs a cutoff.
    PowerToCutoff { power: f64 },
}

#[derive(Clone)]
enum Source {
    Zero,
    Separable { profile: Arc<[Complex64]>, temporal: Temporal },
    /// Frames at increasing times, piecewise-linear in between, zero after the last frame.
    Sampled { times: Arc<[f64]>, frames: Arc<[Vec<Complex64>]> },
    Custom(Arc<dyn Fn(f64, usize) -> Complex64 + Send + Sync>),
}

/// Forcing term `f(t, x)` on the grid nodes, with optional cutoff `f = 0` for `t > T0`.
#[derive(Clone)]
pub struct ForcingSpec {
    source: Source,
    cutoff: Option<f64>,
    class: ForcingClass,
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Zero => "zero".to_string(),
            Source::Separable { temporal, .. } => format!("separable({temporal:?})"),
            Source::Sampled { times, .. } => format!("sampled({} frames)", times.len()),
            Source::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("ForcingSpec")
            .field("source", &kind)
            .field("cutoff", &self.cutoff)
            .field("class", &self.class)
            .finish()
    }
}

impl ForcingSpec {
    pub fn zero() -> Self {
        ForcingSpec { source: Source::Zero, cutoff: Some(0.0), class: ForcingClass::H10 }
    }

    pub fn separable(profile: &Field, temporal: Temporal, cutoff: Option<f64>, class: ForcingClass) -> Result<Self> {
        if let Some(t0) = cutoff {
            if !(t0 >= 0.0) || !t0.is_finite() {
                return Err(Error::InvalidParameter(format!("forcing cutoff must be finite and nonnegative, got {t0}")));
            }
        }
        match temporal {
            Temporal::PowerToCutoff { power } => {
                if cutoff.is_none() {
                    return Err(Error::InvalidParameter("power-to-cutoff forcing needs a cutoff time".into()));
                }
                if !(power >= 0.0) {
                    return Err(Error::InvalidParameter(format!("power must be nonnegative, got {power}")));
                }
            }
            Temporal::Decaying { rate } if !(rate >= 0.0) => {
                return Err(Error::InvalidParameter(format!("decay rate must be nonnegative, got {rate}")));
            }
            _ => {}
        }
        Ok(ForcingSpec {
            source: Source::Separable { profile: profile.values().into(), temporal },
            cutoff,
            class,
        })
    }

    /// Frames sampled at strictly increasing `times`; the forcing vanishes after the last time.
    pub fn sampled(grid: &GridSpec, times: Vec<f64>, frames: Vec<Vec<Complex64>>, class: ForcingClass) -> Result<Self> {
        if times.is_empty() || times.len() != frames.len() {
            return Err(Error::InvalidParameter("sampled forcing needs one frame per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sampled forcing times must increase".into()));
        }
        if frames.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::GridMismatch("forcing frame size differs from the grid".into()));
        }
        let cutoff = *times.last().expect("nonempty");
        Ok(ForcingSpec {
            source: Source::Sampled { times: times.into(), frames: frames.into() },
            cutoff: Some(cutoff),
            class,
        })
    }

    /// Arbitrary `f(t, node)`.
    pub fn custom(f: impl Fn(f64, usize) -> Complex64 + Send + Sync + 'static, cutoff: Option<f64>, class: ForcingClass) -> Self {
        ForcingSpec { source: Source::Custom(Arc::new(f)), cutoff, class }
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn class(&self) -> ForcingClass {
        self.class
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, Source::Zero)
    }

    /// True when `f(t) = 0` is guaranteed.
    pub fn vanishes_at(&self, t: f64) -> bool {
        self.is_zero() || self.cutoff.is_some_and(|t0| t > t0)
    }

    /// Writes `f(t, ·)` into `out`.
    pub fn sample_into(&self, t: f64, out: &mut [Complex64]) {
        let zero = Complex64::new(0.0, 0.0);
        if self.vanishes_at(t) {
            out.iter_mut().for_each(|z| *z = zero);
            return;
        }
        match &self.source {
            Source::Zero => unreachable!(),
            Source::Separable { profile, temporal } => {
                let theta = match *temporal {
                    Temporal::Constant => Complex64::new(1.0, 0.0),
                    Temporal::Oscillating { omega } => Complex64::from_polar(1.0, omega * t),
                    Temporal::Decaying { rate } => Complex64::new((-rate * t).exp(), 0.0),
                    Temporal::PowerToCutoff { power } => {
                        let t0 = self.cutoff.expect("validated");
                        Complex64::new((t0 - t).max(0.0).powf(power), 0.0)
                    }
                };
                for (o, p) in out.iter_mut().zip(profile.iter()) {
                    *o = theta * p;
                }
            }
            Source::Sampled { times, frames } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    out.copy_from_slice(&frames[0]);
                } else if k == times.len() {
                    out.copy_from_slice(&frames[k - 1]);
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = frames[k - 1][j] * (1.0 - w) + frames[k][j] * w;
                    }
                }
            }
            Source::Custom(f) => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = f(t, j);
                }
            }
        }
    }

    pub fn sample(&self, grid: &Arc<GridSpec>, t: f64) -> Field {
        let mut f = Field::zeros(grid.clone());
        self.sample_into(t, f.values_mut());
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    /// Trapezoidal rule; its `identity_residual` is only a diagnostic.
    CrankNicolson,
}

/// One row of the mass ledger, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassLedgerEntry {
    pub t: f64,
    pub mass: f64,
    pub absorption: f64,
    pub lmp1: f64,
    pub work: f64,
    pub step_defect: f64,
    pub identity_residual: f64,
    pub h1: f64,
    pub lapl2: f64,
}

pub const LEDGER_HEADER: &str = "t,mass,absorption,lmp1,work,step_defect,identity_residual,h1,lapl2";

impl MassLedgerEntry {
    /// Row for a state with no preceding step (`work`, `step_defect` and residual are 0).
    pub fn initial(t: f64, u: &Field, params: &AbsorptionParams) -> Self {
        let m = params.m.value();
        MassLedgerEntry {
            t,
            mass: u.mass(),
            absorption: nonlin::absorption(u.grid(), u.values(), m, params.eps),
            lmp1: u.lmp1_power(m),
            work: 0.0,
            step_defect: 0.0,
            identity_residual: 0.0,
            h1: u.h1_seminorm(),
            lapl2: u.laplacian_l2(),
        }
    }

    fn fields(&self) -> [f64; 9] {
        [
            self.t,
            self.mass,
            self.absorption,
            self.lmp1,
            self.work,
            self.step_defect,
            self.identity_residual,
            self.h1,
            self.lapl2,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub entries: Vec<MassLedgerEntry>,
}

impl MassLedger {
    pub fn new(entries: Vec<MassLedgerEntry>) -> Self {
        MassLedger { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, e: MassLedgerEntry) {
        self.entries.push(e);
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.t).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mass).collect()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.identity_residual).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LEDGER_HEADER}")?;
        for e in &self.entries {
            let row: Vec<String> = e.fields().iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != LEDGER_HEADER {
            return Err(Error::Parse(format!("unexpected ledger header {header:?}")));
        }
        let mut entries = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("ledger row {}: {e}", k + 2)))?;
            if v.len() != 9 {
                return Err(Error::Parse(format!("ledger row {} has {} columns", k + 2, v.len())));
            }
            entries.push(MassLedgerEntry {
                t: v[0],
                mass: v[1],
                absorption: v[2],
                lmp1: v[3],
                work: v[4],
                step_defect: v[5],
                identity_residual: v[6],
                h1: v[7],
                lapl2: v[8],
            });
        }
        Ok(MassLedger { entries })
    }
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub params: AbsorptionParams,
    pub potential: PotentialSpec,
    pub u0: Field,
    pub forcing: ForcingSpec,
    pub time: TimeGrid,
    pub scheme: Scheme,
    pub solver: SolverOptions,
    /// Keep every `k`-th state (the initial and final states are always kept); `0` keeps none in between.
    pub snapshot_stride: usize,
}

impl RunSetup {
    pub fn new(params: AbsorptionParams, potential: PotentialSpec, u0: Field, forcing: ForcingSpec, time: TimeGrid) -> Self {
        RunSetup {
            params,
            potential,
            u0,
            forcing,
            time,
            scheme: Scheme::ImplicitEuler,
            solver: SolverOptions::default(),
            snapshot_stride: 0,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.u0.grid()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nonlinear_iterations: usize,
    pub linear_iterations: usize,
    pub max_residual: f64,
    /// Steps where Newton failed and Picard finished.
    pub fallback_steps: usize,
    pub apriori_violations: usize,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub state: Field,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub setup: RunSetup,
    pub ledger: MassLedger,
    pub snapshots: Vec<Snapshot>,
    pub final_state: Field,
    pub steps_completed: usize,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.setup.time.time(self.steps_completed)
    }

    /// Snapshot at step `k`, if stored.
    pub fn state_at(&self, k: usize) -> Option<&Field> {
        self.snapshots.iter().find(|s| s.step == k).map(|s| &s.state)
    }
}

/// A run that stopped early; `partial` holds everything computed before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run stopped after {} steps: {}", self.partial.steps_completed, self.error)
    }
}

impl std::error::Error for RunFailure {}

/// Fixed-step integrator reusing one resolvent solver.
#[derive(Debug, Clone)]
pub struct Stepper {
    solver: ResolventSolver,
    params: AbsorptionParams,
    potential: Vec<f64>,
    forcing: ForcingSpec,
    dt: f64,
    scheme: Scheme,
    opts: SolverOptions,
}

pub struct StepOutput {
    pub state: Field,
    pub entry: MassLedgerEntry,
    pub method: Option<SolveMethod>,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub residual: f64,
    pub apriori_ok: bool,
}

impl Stepper {
    pub fn new(
        spectrum: Arc<DirichletSpectrum>,
        params: AbsorptionParams,
        potential: &PotentialSpec,
        forcing: ForcingSpec,
        dt: f64,
        scheme: Scheme,
        opts: SolverOptions,
    ) -> Result<Self> {
        let tau = match scheme {
            Scheme::ImplicitEuler => dt,
            Scheme::CrankNicolson => 0.5 * dt,
        };
        let solver = ResolventSolver::with_spectrum(spectrum, tau, params, potential)?;
        Ok(Stepper { solver, params, potential: potential.total(), forcing, dt, scheme, opts })
    }

    pub fn for_setup(setup: &RunSetup) -> Result<Self> {
        Self::new(
            Arc::new(DirichletSpectrum::new(setup.grid().clone())),
            setup.params,
            &setup.potential,
            setup.forcing.clone(),
            setup.time.dt(),
            setup.scheme,
            setup.solver,
        )
    }

    /// `A_ε u = -iΔu - iVu - i a g_ε(u)`.
    fn apply_operator(&self, u: &Field) -> Field {
        let mut out = grid::laplacian(u);
        let (m, eps, a) = (self.params.m.value(), self.params.eps, self.params.a());
        for (j, o) in out.values_mut().iter_mut().enumerate() {
            let z = u.values()[j];
            *o = -I * (*o + self.potential[j] * z + a * nonlin::g_point(z, m, eps));
        }
        out
    }

    /// Advances `u` from `t` to `t + Δt`.
    pub fn step(&self, u: &Field, t: f64) -> Result<StepOutput> {
        let grid = u.grid().clone();
        let dt = self.dt;
        let f_time = match self.scheme {
            Scheme::ImplicitEuler => t + dt,
            Scheme::CrankNicolson => t + 0.5 * dt,
        };
        let f = self.forcing.sample(&grid, f_time);
        let resting = u.values().iter().all(|z| z.norm_sqr() == 0.0) && self.forcing.vanishes_at(f_time);

        let (mut next, method, iterations, linear_iterations, residual, apriori_ok) = if resting {
            (Field::zeros(grid.clone()), None, 0, 0, 0.0, true)
        } else {
            let rhs = match self.scheme {
                Scheme::ImplicitEuler => u.axpy(-I * dt, &f)?,
                Scheme::CrankNicolson => {
                    let au = self.apply_operator(u);
                    u.axpy(Complex64::new(-0.5 * dt, 0.0), &au)?.axpy(-I * dt, &f)?
                }
            };
            let (next, rep) = self.solver.solve_from(&rhs, Some(u), &self.opts)?;
            (next, Some(rep.method), rep.iterations, rep.linear_iterations, rep.residual_l2, rep.apriori_ok)
        };
        if next.mass() < SNAP_TO_ZERO_MASS {
            next = Field::zeros(grid.clone());
        }

        let m = self.params.m.value();
        let eps = self.params.eps;
        let mass_before = u.mass();
        let mass = next.mass();
        let absorption = nonlin::absorption(&grid, next.values(), m, eps);
        let work = f.inner(&next).im;
        let step_defect = 0.5 * next.sub(u)?.mass();
        let identity_residual =
            (0.5 * (mass - mass_before) + step_defect + dt * self.params.a.im() * absorption - dt * work).abs();
        let entry = MassLedgerEntry {
            t: t + dt,
            mass,
            absorption,
            lmp1: next.lmp1_power(m),
            work,
            step_defect,
            identity_residual,
            h1: next.h1_seminorm(),
            lapl2: next.laplacian_l2(),
        };
        Ok(StepOutput { state: next, entry, method, iterations, linear_iterations, residual, apriori_ok })
    }
}

/// Single step from `u` at time `t`, building a fresh solver.
pub fn step(
    u: &Field,
    t: f64,
    dt: f64,
    params: &AbsorptionParams,
    potential: &PotentialSpec,
    forcing: &ForcingSpec,
    tol: f64,
) -> Result<(Field, MassLedgerEntry)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let stepper = Stepper::new(
        Arc::new(DirichletSpectrum::new(u.grid().clone())),
        *params,
        potential,
        forcing.clone(),
        dt,
        Scheme::ImplicitEuler,
        SolverOptions { tol, ..SolverOptions::default() },
    )?;
    let out = stepper.step(u, t)?;
    Ok((out.state, out.entry))
}

/// Integrates `setup.time.steps()` steps from `u0`.
pub fn run(setup: &RunSetup) -> std::result::Result<Trajectory, Box<RunFailure>> {
    let mut traj = Trajectory {
        setup: setup.clone(),
        ledger: MassLedger::default(),
        snapshots: vec![Snapshot { step: 0, t: 0.0, state: setup.u0.clone() }],
        final_state: setup.u0.clone(),
        steps_completed: 0,
        stats: SolverStats::default(),
    };
    traj.ledger.push(MassLedgerEntry::initial(0.0, &setup.u0, &setup.params));
    let stepper = match validate(setup).and_then(|_| Stepper::for_setup(setup)) {
        Ok(s) => s,
        Err(error) => return Err(Box::new(RunFailure { partial: traj, error })),
    };
    let steps = setup.time.steps();
    for k in 0..steps {
        let t = setup.time.time(k);
        let out = match stepper.step(&traj.final_state, t) {
            Ok(o) => o,
            Err(e) => {
                let error = Error::Step { step: k + 1, t: t + setup.time.dt(), source: Box::new(e) };
                return Err(Box::new(RunFailure { partial: traj, error }));
            }
        };
        let s = &mut traj.stats;
        s.nonlinear_iterations += out.iterations;
        s.linear_iterations += out.linear_iterations;
        s.max_residual = s.max_residual.max(out.residual);
        s.fallback_steps += usize::from(out.method == Some(SolveMethod::Hybrid));
        s.apriori_violations += usize::from(!out.apriori_ok);
        traj.ledger.push(out.entry);
        traj.final_state = out.state;
        traj.steps_completed = k + 1;
        let stride = setup.snapshot_stride;
        if (stride > 0 && (k + 1) % stride == 0) || k + 1 == steps {
            traj.snapshots.push(Snapshot { step: k + 1, t: t + setup.time.dt(), state: traj.final_state.clone() });
        }
    }
    Ok(traj)
}

fn validate(setup: &RunSetup) -> Result<()> {
    if setup.potential.len() != setup.grid().len() {
        return Err(Error::GridMismatch("potential does not match the initial datum".into()));
    }
    if !(setup.solver.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", setup.solver.tol)));
    }
    if setup.u0.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("initial datum has non-finite values".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub pass: bool,
    /// Largest `‖d(t)‖ - ‖d(s)‖ - Σ_{s}^{t} Δt‖f - f̃‖` over `s ≤ t`.
    pub max_violation: f64,
    pub slack: f64,
    pub initial_distance: f64,
    pub final_distance: f64,
    pub forcing_budget: f64,
}

/// Checks `‖u(t) - ũ(t)‖ ≤ ‖u(s) - ũ(s)‖ + Σ Δt ‖f - f̃‖` for all ledger times `s ≤ t`.
///
/// Both runs must store every state (`snapshot_stride = 1`).
pub fn contraction_check(run1: &Trajectory, run2: &Trajectory) -> Result<ContractionReport> {
    let (s1, s2) = (&run1.setup, &run2.setup);
    if s1.grid() != s2.grid() {
        return Err(Error::Incompatible("runs use different grids".into()));
    }
    if s1.time != s2.time || run1.steps_completed != run2.steps_completed {
        return Err(Error::Incompatible("runs use different time grids".into()));
    }
    if s1.params != s2.params || s1.potential != s2.potential || s1.scheme != s2.scheme {
        return Err(Error::Incompatible("runs use different equation parameters".into()));
    }
    let steps = run1.steps_completed;
    let states = |r: &Trajectory| -> Result<Vec<Field>> {
        (0..=steps)
            .map(|k| {
                r.state_at(k)
                    .cloned()
                    .ok_or_else(|| Error::Incompatible(format!("state at step {k} was not stored")))
            })
            .collect()
    };
    let (a, b) = (states(run1)?, states(run2)?);
    let grid = s1.grid().clone();
    let dt = s1.time.dt();
    let tol = s1.solver.tol.max(s2.solver.tol);
    let slack = 10.0 * steps as f64 * tol;

    let mut budget = 0.0;
    let mut min_q = f64::INFINITY;
    let mut max_violation = 0.0f64;
    let mut first = 0.0;
    let mut last = 0.0;
    for k in 0..=steps {
        if k > 0 {
            let t = s1.time.time(k);
            let df = s1.forcing.sample(&grid, t).sub(&s2.forcing.sample(&grid, t))?;
            budget += dt * df.l2();
        }
        let d = a[k].sub(&b[k])?.l2();
        if k == 0 {
            first = d;
        }
        last = d;
        let q = d - budget;
        min_q = min_q.min(q);
        max_violation = max_violation.max(q - min_q);
    }
    Ok(ContractionReport {
        pass: max_violation <= slack,
        max_violation,
        slack,
        initial_distance: first,
        final_distance: last,
        forcing_budget: budget,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct H1Report {
    /// False when the potential is not constant; the bound is then not claimed.
    pub applicable: bool,
    pub pass: bool,
    pub max_ratio: f64,
    pub tolerance: f64,
    /// `‖∇u‖` never increases once the forcing has switched off.
    pub nonincreasing_after_cutoff: Option<bool>,
}

/// Monitors `‖∇u(t)‖ ≤ (‖∇u(0)‖ + Σ Δt ‖∇f‖)(1 + tolerance)`.
pub fn h1_monitor(run: &Trajectory, tolerance: f64) -> H1Report {
    let setup = &run.setup;
    let applicable = setup.potential.is_constant();
    let grid = setup.grid().clone();
    let dt = setup.time.dt();
    let entries = &run.ledger.entries;
    let mut budget = entries.first().map_or(0.0, |e| e.h1);
    let mut max_ratio = 0.0f64;
    let mut pass = true;
    for (k, e) in entries.iter().enumerate() {
        if k > 0 {
            budget += dt * setup.forcing.sample(&grid, e.t).h1_seminorm();
        }
        let bound = budget * (1.0 + tolerance);
        if e.h1 > bound + 1e-14 {
            pass = false;
        }
        if budget > 0.0 {
            max_ratio = max_ratio.max(e.h1 / budget);
        }
    }
    let nonincreasing_after_cutoff = setup.forcing.cutoff().map(|t0| {
        let tail: Vec<f64> = entries.iter().filter(|e| e.t >= t0).map(|e| e.h1).collect();
        tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
    });
    H1Report { applicable, pass: pass || !applicable, max_ratio, tolerance, nonincreasing_after_cutoff }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub dts: Vec<f64>,
    /// `‖u_{Δt/2^k} - u_{Δt/2^{k+1}}‖₂` at the common final time.
    pub differences: Vec<f64>,
    /// `log₂` of successive difference ratios.
    pub orders: Vec<f64>,
}

/// Runs `setup` at `Δt, Δt/2, …, Δt/2^{levels-1}` over the same horizon.
pub fn self_convergence(setup: &RunSetup, levels: usize) -> Result<ConvergenceStudy> {
    if levels < 2 {
        return Err(Error::InvalidParameter("self-convergence needs at least two levels".into()));
    }
    let horizon = setup.time.horizon();
    let finals: Vec<Result<(f64, Field)>> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let dt = setup.time.dt() / f64::from(1u32 << k);
            let mut s = setup.clone();
            s.time = TimeGrid::new(dt, setup.time.steps() << k)?;
            s.snapshot_stride = 0;
            debug_assert!((s.time.horizon() - horizon).abs() <= 1e-12 * horizon.max(1.0));
            run(&s).map(|t| (dt, t.final_state)).map_err(|f| f.error)
        })
        .collect();
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let dts = finals.iter().map(|(dt, _)| *dt).collect();
    let differences: Vec<f64> = finals
        .windows(2)
        .map(|w| w[0].1.sub(&w[1].1).map(|d| d.l2()))
        .collect::<Result<_>>()?;
    let orders = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceStudy { dts, differences, orders })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsRefinement {
    pub eps: Vec<f64>,
    /// `‖u_{ε_k}(T) - u_{ε_{k+1}}(T)‖₂`.
    pub differences: Vec<f64>,
}

/// Final-state differences between runs at `ε, ε/factor, ε/factor², …`.
pub fn eps_refinement(setup: &RunSetup, factor: f64, levels: usize) -> Result<EpsRefinement> {
    if levels < 2 || !(factor > 1.0) {
        return Err(Error::InvalidParameter("ε refinement needs ≥ 2 levels and factor > 1".into()));
    }
    let eps: Vec<f64> = (0..levels).map(|k| setup.params.eps / factor.powi(k as i32)).collect();
    let finals = eps
        .par_iter()
        .map(|&e| {
            let mut s = setup.clone();
            s.params = s.params.with_eps(e)?;
            s.snapshot_stride = 0;
            run(&s).map(|t| t.final_state).map_err(|f| f.error)
        })
        .collect::<Result<Vec<_>>>()?;
    let differences = finals.windows(2).map(|w| w[0].sub(&w[1]).map(|d| d.l2())).collect::<Result<_>>()?;
    Ok(EpsRefinement { eps, differences })
}
