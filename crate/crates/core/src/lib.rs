//! Numerical laboratory for the damped nonlinear Schrödinger equation
//!
//! ```text
//! i u_t + Δu + V(x) u + a |u|^{-(1-m)} u = f(t, x)   in (0, ∞) × Ω,
//! u = 0 on ∂Ω,   u(0) = u0,
//! ```
//!
//! with sublinear absorption `0 < m < 1` and a complex coefficient `a` on the
//! critical ray `2√m Im(a) = (1-m) Re(a)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`coeff`]: coefficient sets, extinction exponents and smallness thresholds;
//! * [`grid`]: box domains, the Dirichlet Laplacian, discrete norms, potentials;
//! * [`nonlin`]: the regularised absorption `g_ε` and its pointwise certificates;
//! * [`stationary`]: the resolvent problem `u + τ A_ε u = F`;
//! * [`evolve`]: implicit-Euler time stepping with an exact mass ledger;
//! * [`extinct`]: extinction detection, comparison envelopes and decay fits;
//! * [`harness`]: configuration, presets, scenario runs and sweeps.

pub mod coeff;
pub mod error;
pub mod evolve;
pub mod extinct;
pub mod grid;
pub mod harness;
pub mod nonlin;
pub mod stationary;

pub use num_complex::Complex64;

pub use coeff::{Classification, DampingCoefficient, Exponent, ExtinctionExponents};
pub use error::{Error, Result};
pub use evolve::{ForcingSpec, MassLedger, MassLedgerEntry, Scheme, TimeGrid, Trajectory};
pub use extinct::{DecayFit, DecayKind, EnvelopeParams, ExtinctionReport};
pub use grid::{Field, GridSpec, PotentialSpec};
pub use nonlin::AbsorptionParams;
pub use stationary::{ResolventProblem, SolveMethod, SolveReport, SolverOptions};
