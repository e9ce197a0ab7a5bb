//! Extinction detection, comparison envelopes and decay-law fits.
//!
//! With `y(t) = ‖u(t)‖₂²` and no forcing, the mass identity and the
//! Gagliardo–Nirenberg inequalities give
//!
//! ```text
//! y' + 2 α_ℓ y^δ ≤ 0,                      α_ℓ = Im(a) C_GN⁻¹ sup‖∇^ℓ u‖^{-N(1-m)/(2ℓ)},
//! y' ≥ -2 Im(a) |Ω|^{(1-m)/2} y^{(m+1)/2},
//! ```
//!
//! whose closed-form solutions bound the mass from above (the envelope) and
//! from below (the floor). Constants are estimated from the run itself.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{ForcingClass, MassLedger, MassLedgerEntry, Trajectory};

pub const EXTINCTION_THRESHOLD: f64 = 1e-12;
pub const SCHEMA_VERSION: u32 = 1;

/// Left-hand exponent `θ_ℓ` and gradient exponent `κ_ℓ = N(1-m)/(2ℓ)` of the GN inequality.
pub fn gn_exponents(dim: usize, m: f64, ell: usize) -> Result<(f64, f64)> {
    let n = dim as f64;
    let kappa = n * (1.0 - m) / (2.0 * ell as f64);
    match ell {
        1 => Ok((((n + 2.0) - m * (n - 2.0)) / 2.0, kappa)),
        2 => Ok((((n + 4.0) - m * (n - 4.0)) / 4.0, kappa)),
        _ => Err(Error::InvalidParameter(format!("derivative order must be 1 or 2, got {ell}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnEstimate {
    pub c_gn: f64,
    /// Ledger time of the maximising entry.
    pub argmax_t: f64,
}

fn gradient_norm(e: &MassLedgerEntry, ell: usize) -> f64 {
    if ell == 1 {
        e.h1
    } else {
        e.lapl2
    }
}

/// `Ĉ_GN = max ‖u‖^{θ_ℓ} / (‖u‖_{m+1}^{m+1} ‖∇^ℓ u‖^{κ_ℓ})` over entries with mass above `1e-16`.
pub fn gn_constant_estimate(ledger: &MassLedger, dim: usize, m: f64, ell: usize) -> Result<GnEstimate> {
    let (theta, kappa) = gn_exponents(dim, m, ell)?;
    ledger
        .entries
        .iter()
        .filter(|e| e.mass > 1e-16 && e.lmp1 > 0.0 && gradient_norm(e, ell) > 0.0)
        .map(|e| {
            let ratio = e.mass.sqrt().powf(theta) / (e.lmp1 * gradient_norm(e, ell).powf(kappa));
            GnEstimate { c_gn: ratio, argmax_t: e.t }
        })
        .max_by(|a, b| a.c_gn.total_cmp(&b.c_gn))
        .ok_or_else(|| Error::InsufficientData("no ledger entry with positive mass".into()))
}

/// Solution of `y' = -2 α y^δ`, `y(T0) = y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub y0: f64,
    pub alpha: f64,
    pub delta: f64,
    pub t0: f64,
    pub ell: usize,
}

impl EnvelopeParams {
    /// Accepts `δ > 1/2`; `δ > 1` gives the algebraic branch with no finite extinction.
    pub fn new(y0: f64, alpha: f64, delta: f64, t0: f64, ell: usize) -> Result<Self> {
        if !(y0 >= 0.0) || !y0.is_finite() {
            return Err(Error::InvalidParameter(format!("y0 must be finite and nonnegative, got {y0}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("α must be positive, got {alpha}")));
        }
        if !(delta > 0.5) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("δ must exceed 1/2, got {delta}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidParameter("T0 must be finite".into()));
        }
        if !(ell == 1 || ell == 2) {
            return Err(Error::InvalidParameter(format!("derivative order must be 1 or 2, got {ell}")));
        }
        Ok(EnvelopeParams { y0, alpha, delta, t0, ell })
    }

    /// `y_env(t)`; equal to `y0` for `t ≤ T0`.
    pub fn value(&self, t: f64) -> f64 {
        let s = (t - self.t0).max(0.0);
        let (y0, a, d) = (self.y0, self.alpha, self.delta);
        if y0 == 0.0 {
            return 0.0;
        }
        if d == 1.0 {
            y0 * (-2.0 * a * s).exp()
        } else if d < 1.0 {
            let base = y0.powf(1.0 - d) - 2.0 * a * (1.0 - d) * s;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / (1.0 - d))
            }
        } else {
            y0 * (1.0 + 2.0 * a * (d - 1.0) * y0.powf(d - 1.0) * s).powf(-1.0 / (d - 1.0))
        }
    }

    /// `T0 + y0^{1-δ} / (2α(1-δ))` for `δ < 1`; `None` otherwise (unless `y0 = 0`).
    pub fn extinction_time(&self) -> Option<f64> {
        if self.y0 == 0.0 {
            Some(self.t0)
        } else if self.delta < 1.0 {
            Some(self.t0 + self.y0.powf(1.0 - self.delta) / (2.0 * self.alpha * (1.0 - self.delta)))
        } else {
            None
        }
    }
}

/// Solution of `y' = -2 Im(a) |Ω|^{(1-m)/2} y^{(m+1)/2}`, the lower comparison curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorParams {
    pub y0: f64,
    pub t0: f64,
    pub m: f64,
    pub im_a: f64,
    pub volume: f64,
}

impl FloorParams {
    /// `(1-m) Im(a) |Ω|^{(1-m)/2}`: the decay speed of `y^{(1-m)/2}`.
    fn speed(&self) -> f64 {
        (1.0 - self.m) * self.im_a * self.volume.powf(0.5 * (1.0 - self.m))
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = (t - self.t0).max(0.0);
        let base = self.y0.powf(0.5 * (1.0 - self.m)) - self.speed() * s;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(2.0 / (1.0 - self.m))
        }
    }

    /// `T0 + ‖u(T0)‖^{1-m} / ((1-m) Im(a) |Ω|^{(1-m)/2})`: no solution can extinguish earlier.
    pub fn extinction_time(&self) -> f64 {
        self.t0 + self.y0.powf(0.5 * (1.0 - self.m)) / self.speed()
    }
}

/// First ledger time with mass ≤ `threshold` such that all later entries stay below it.
pub fn detect_extinction(ledger: &MassLedger, threshold: f64) -> Option<f64> {
    let mut candidate = None;
    for e in &ledger.entries {
        if e.mass <= threshold {
            candidate.get_or_insert(e.t);
        } else {
            candidate = None;
        }
    }
    candidate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Exponential,
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// Exponential: `λ` in `y ≈ C e^{-λt}` (mass). Algebraic: `p` in `‖u‖₂ ≈ C (1 + c(t-T0))^{-p}`.
    pub rate_or_exponent: f64,
    pub r2: f64,
    pub window: [f64; 2],
    pub points: usize,
    /// Time scale `c` of the algebraic model.
    pub scale: Option<f64>,
    pub theoretical: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FitOptions {
    pub t0: f64,
    /// Algebraic time scale; fitted by maximising `r²` when absent.
    pub scale: Option<f64>,
    pub theoretical: Option<f64>,
}

pub const MIN_FIT_POINTS: usize = 10;
pub const FIT_MASS_FLOOR: f64 = 1e-14;

/// `(slope, intercept, r²)` of ordinary least squares.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Least-squares decay fit on `log mass` over `window`.
pub fn decay_fit(ledger: &MassLedger, kind: DecayKind, window: [f64; 2], opts: &FitOptions) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = ledger
        .entries
        .iter()
        .filter(|e| e.t >= window[0] && e.t <= window[1] && e.mass > FIT_MASS_FLOOR)
        .map(|e| (e.t, e.mass.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "decay fit needs {MIN_FIT_POINTS} points with mass > {FIT_MASS_FLOOR:e}, found {}",
            pts.len()
        )));
    }
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let logy: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (rate, r2, scale) = match kind {
        DecayKind::Exponential => {
            let (slope, _, r2) = linear_fit(&t, &logy);
            (-slope, r2, None)
        }
        DecayKind::Algebraic => {
            if pts.iter().any(|p| p.0 < opts.t0) {
                return Err(Error::InvalidParameter("algebraic fit window starts before T0".into()));
            }
            let fit_at = |c: f64| {
                let x: Vec<f64> = t.iter().map(|s| (1.0 + c * (s - opts.t0)).ln()).collect();
                linear_fit(&x, &logy)
            };
            let c = match opts.scale {
                Some(c) if c > 0.0 => c,
                Some(c) => return Err(Error::InvalidParameter(format!("time scale must be positive, got {c}"))),
                None => best_scale(&fit_at, window[1] - opts.t0),
            };
            let (slope, _, r2) = fit_at(c);
            (-0.5 * slope, r2, Some(c))
        }
    };
    Ok(DecayFit {
        kind,
        rate_or_exponent: rate,
        r2,
        window,
        points: pts.len(),
        scale,
        theoretical: opts.theoretical,
    })
}

/// Golden-section search for the `r²`-maximising scale on a log grid.
fn best_scale(fit_at: &dyn Fn(f64) -> (f64, f64, f64), span: f64) -> f64 {
    let span = span.max(f64::MIN_POSITIVE);
    // scan log10 c over [-3, 6] relative to 1/span, then refine
    let base = 1.0 / span;
    let score = |lc: f64| fit_at(base * 10f64.powf(lc)).2;
    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut lc = -3.0;
    while lc <= 6.0 {
        let s = score(lc);
        if s > best.0 {
            best = (s, lc);
        }
        lc += 0.25;
    }
    let (mut lo, mut hi) = (best.1 - 0.25, best.1 + 0.25);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if score(a) >= score(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    base * 10f64.powf(0.5 * (lo + hi))
}

/// Exponent `2/((1-m)(N-2))` (ℓ = 1, N ≥ 3) or `4/((1-m)(N-4))` (ℓ = 2, N ≥ 5) for `‖u‖₂`.
pub fn theoretical_exponent(dim: usize, m: f64, ell: usize) -> Option<f64> {
    let n = dim as f64;
    match ell {
        1 if dim >= 3 => Some(2.0 / ((1.0 - m) * (n - 2.0))),
        2 if dim >= 5 => Some(4.0 / ((1.0 - m) * (n - 4.0))),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationCheck {
    pub ok: bool,
    /// Worst `y / bound` (envelope) or `bound / y` (floor) over checked entries.
    pub worst_ratio: f64,
    pub worst_t: f64,
}

/// `y(t) ≤ y_env(t)(1 + slack) + floor` for ledger times `t ≥ T0`.
pub fn envelope_domination(ledger: &MassLedger, env: &EnvelopeParams, slack: f64, floor: f64) -> DominationCheck {
    let mut out = DominationCheck { ok: true, worst_ratio: 0.0, worst_t: env.t0 };
    for e in ledger.entries.iter().filter(|e| e.t >= env.t0) {
        let bound = env.value(e.t);
        if e.mass > bound * (1.0 + slack) + floor {
            out.ok = false;
        }
        let ratio = if bound > 0.0 { e.mass / bound } else if e.mass > floor { f64::INFINITY } else { 0.0 };
        if ratio > out.worst_ratio {
            out.worst_ratio = ratio;
            out.worst_t = e.t;
        }
    }
    out
}

/// `y(t) ≥ y_floor(t)(1 - slack)` for ledger times up to `until`.
pub fn floor_domination(ledger: &MassLedger, floor: &FloorParams, slack: f64, until: f64) -> DominationCheck {
    let mut out = DominationCheck { ok: true, worst_ratio: 0.0, worst_t: floor.t0 };
    for e in ledger.entries.iter().filter(|e| e.t >= floor.t0 && e.t < until) {
        let bound = floor.value(e.t);
        if bound == 0.0 {
            continue;
        }
        if e.mass < bound * (1.0 - slack) {
            out.ok = false;
        }
        let ratio = if e.mass > 0.0 { bound / e.mass } else { f64::INFINITY };
        if ratio > out.worst_ratio {
            out.worst_ratio = ratio;
            out.worst_t = e.t;
        }
    }
    out
}

/// Scalars the bound report needs besides the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub dim: usize,
    pub m: f64,
    pub im_a: f64,
    pub volume: f64,
    pub ell: usize,
    /// Start of the forcing-free regime.
    pub t0: f64,
    pub slack: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub t_num: Option<f64>,
    pub lower_bound: f64,
    pub upper_envelope_time: Option<f64>,
    pub c_gn: f64,
    pub delta: f64,
    pub alpha: f64,
    pub alpha_ell: f64,
    pub sup_gradient: f64,
    pub envelope: EnvelopeParams,
    pub floor: FloorParams,
    pub lower_ok: bool,
    /// `None` when either time is unavailable.
    pub upper_ok: Option<bool>,
    pub envelope_check: DominationCheck,
    pub floor_check: DominationCheck,
}

fn entry_at(ledger: &MassLedger, t0: f64) -> Result<&MassLedgerEntry> {
    ledger
        .entries
        .iter()
        .find(|e| e.t >= t0 - 1e-12 * t0.abs().max(1.0))
        .ok_or_else(|| Error::InsufficientData(format!("ledger ends before T0 = {t0}")))
}

/// Envelope, floor and extinction-time comparisons built from the run's own constants.
pub fn bound_report(ledger: &MassLedger, inp: &BoundInputs, c_gn: f64) -> Result<BoundReport> {
    if !(c_gn > 0.0) {
        return Err(Error::InvalidParameter(format!("GN constant must be positive, got {c_gn}")));
    }
    let (_, kappa) = gn_exponents(inp.dim, inp.m, inp.ell)?;
    let n = inp.dim as f64;
    let ell = inp.ell as f64;
    let delta = ((n + 2.0 * ell) - inp.m * (n - 2.0 * ell)) / (4.0 * ell);
    let start = entry_at(ledger, inp.t0)?;
    let t0 = start.t;
    let sup_gradient = ledger.entries.iter().map(|e| gradient_norm(e, inp.ell)).fold(0.0, f64::max);
    let alpha = inp.im_a / c_gn;
    let alpha_ell = if sup_gradient > 0.0 { alpha * sup_gradient.powf(-kappa) } else { alpha };
    let envelope = EnvelopeParams::new(start.mass, alpha_ell, delta, t0, inp.ell)?;
    let floor = FloorParams { y0: start.mass, t0, m: inp.m, im_a: inp.im_a, volume: inp.volume };
    let t_num = detect_extinction(ledger, inp.threshold);
    let lower_bound = if start.mass == 0.0 { t0 } else { floor.extinction_time() };
    let upper = envelope.extinction_time();
    let lower_ok = match t_num {
        Some(t) => t >= t0 + (lower_bound - t0) * (1.0 - inp.slack),
        None => true,
    };
    let upper_ok = match (t_num, upper) {
        (Some(t), Some(u)) => Some(t <= t0 + (u - t0) * (1.0 + inp.slack)),
        _ => None,
    };
    let envelope_check = envelope_domination(ledger, &envelope, inp.slack, inp.threshold);
    let floor_check = floor_domination(ledger, &floor, inp.slack, t_num.unwrap_or(f64::INFINITY));
    Ok(BoundReport {
        t_num,
        lower_bound,
        upper_envelope_time: upper,
        c_gn,
        delta,
        alpha,
        alpha_ell,
        sup_gradient,
        envelope,
        floor,
        lower_ok,
        upper_ok,
        envelope_check,
        floor_check,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailTrend {
    pub name: String,
    pub start: f64,
    pub end: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `false` when the forcing is still active at the horizon.
    pub conclusive: bool,
    pub pass: bool,
    pub trends: Vec<TailTrend>,
}

/// Tail behaviour of `‖u‖₂`, `‖u‖_p`, `‖∇u‖₂` and `-d/dt ‖u‖²` over the final quarter.
pub fn vanishing_monitor(run: &Trajectory, lp: &[f64]) -> VanishingReport {
    let horizon = run.final_time();
    let forcing = &run.setup.forcing;
    let conclusive = forcing.class() != ForcingClass::W11L2 || forcing.cutoff().is_some();
    let conclusive = conclusive && forcing.vanishes_at(horizon);
    let from = 0.75 * horizon;
    let entries: Vec<&MassLedgerEntry> = run.ledger.entries.iter().filter(|e| e.t >= from).collect();
    let mut trends = Vec::new();
    let mut push = |name: String, series: Vec<f64>| {
        if series.len() < 2 {
            return;
        }
        let start = series[0];
        let end = *series.last().expect("nonempty");
        let decreasing = end == 0.0 || (end < start && series.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
        trends.push(TailTrend { name, start, end, decreasing });
    };
    push("l2".into(), entries.iter().map(|e| e.mass.sqrt()).collect());
    push("h1".into(), entries.iter().map(|e| e.h1).collect());
    let rates: Vec<f64> = entries.windows(2).map(|w| (w[0].mass - w[1].mass) / (w[1].t - w[0].t)).collect();
    push("mass_rate".into(), rates);
    let snaps: Vec<_> = run.snapshots.iter().filter(|s| s.t >= from).collect();
    for &p in lp {
        push(format!("lp{p}"), snaps.iter().map(|s| s.state.lp(p)).collect());
    }
    let pass = conclusive && trends.iter().all(|t| t.decreasing);
    VanishingReport { conclusive, pass, trends }
}

/// Everything extinction-related about one run, serialised as a single JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub schema_version: u32,
    pub t_num: Option<f64>,
    pub envelope_ok: bool,
    pub lower_bound: f64,
    pub upper_envelope_time: Option<f64>,
    pub fit: Option<DecayFit>,
    pub bounds: Option<BoundReport>,
    pub vanishing: Option<VanishingReport>,
}

impl ExtinctionReport {
    pub fn from_bounds(bounds: BoundReport, fit: Option<DecayFit>, vanishing: Option<VanishingReport>) -> Self {
        ExtinctionReport {
            schema_version: SCHEMA_VERSION,
            t_num: bounds.t_num,
            envelope_ok: bounds.envelope_check.ok,
            lower_bound: bounds.lower_bound,
            upper_envelope_time: bounds.upper_envelope_time,
            fit,
            bounds: Some(bounds),
            vanishing,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Writes `t,y_env,y_floor,y_ledger` rows for every ledger entry.
pub fn write_envelope_csv<W: Write>(mut w: W, ledger: &MassLedger, env: &EnvelopeParams, floor: &FloorParams) -> Result<()> {
    writeln!(w, "t,y_env,y_floor,y_ledger")?;
    for e in &ledger.entries {
        writeln!(w, "{:e},{:e},{:e},{:e}", e.t, env.value(e.t), floor.value(e.t), e.mass)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ledger_from(points: impl IntoIterator<Item = (f64, f64)>) -> MassLedger {
        MassLedger::new(
            points
                .into_iter()
                .map(|(t, mass)| MassLedgerEntry {
                    t,
                    mass,
                    absorption: 0.0,
                    lmp1: 0.0,
                    work: 0.0,
                    step_defect: 0.0,
                    identity_residual: 0.0,
                    h1: 0.0,
                    lapl2: 0.0,
                })
                .collect(),
        )
    }

    /// RK4 for `y' = -2α y^δ` with steps of 2% of the local time scale `y/|y'|`,
    /// run until `y` has dropped by 280 decades.
    fn ode_extinction_time(y0: f64, alpha: f64, delta: f64) -> f64 {
        let rhs = |y: f64| -2.0 * alpha * y.max(0.0).powf(delta);
        let (mut t, mut y) = (0.0, y0);
        while y > 1e-280 * y0 {
            let h = 0.02 * y / -rhs(y);
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        t
    }

    #[test]
    fn envelope_example_extinction_at_two() {
        let p = EnvelopeParams::new(1.0, 1.0, 0.75, 0.0, 1).unwrap();
        assert!((p.extinction_time().unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(p.value(2.5), 0.0);
        assert!((ode_extinction_time(1.0, 1.0, 0.75) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn envelope_exponential_and_zero() {
        let p = EnvelopeParams::new(3.0, 0.7, 1.0, 1.0, 1).unwrap();
        assert!((p.value(2.0) - 3.0 * (-1.4f64).exp()).abs() < 1e-15);
        assert_eq!(p.extinction_time(), None);
        let z = EnvelopeParams::new(0.0, 0.7, 0.75, 1.0, 1).unwrap();
        assert_eq!(z.value(5.0), 0.0);
        assert_eq!(z.extinction_time(), Some(1.0));
    }

    #[test]
    fn envelope_algebraic_branch_solves_ode() {
        let m = 0.5;
        let p = EnvelopeParams::new(2.0, 0.3, (7.0 + m) / 8.0, 0.0, 2).unwrap();
        assert!(p.extinction_time().is_some());
        let q = EnvelopeParams::new(2.0, 0.3, 1.125, 0.0, 1).unwrap();
        assert_eq!(q.extinction_time(), None);
        let (t, h) = (0.7, 1e-5);
        let deriv = (q.value(t + h) - q.value(t - h)) / (2.0 * h);
        assert!((deriv + 2.0 * 0.3 * q.value(t).powf(1.125)).abs() < 1e-8);
    }

    #[test]
    fn envelope_rejects_bad_parameters() {
        assert!(EnvelopeParams::new(-1.0, 1.0, 0.75, 0.0, 1).is_err());
        assert!(EnvelopeParams::new(1.0, 0.0, 0.75, 0.0, 1).is_err());
        assert!(EnvelopeParams::new(1.0, 1.0, 0.5, 0.0, 1).is_err());
        assert!(EnvelopeParams::new(1.0, 1.0, 0.75, 0.0, 3).is_err());
    }

    #[test]
    fn closed_form_matches_ode_integration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let y0 = rng.random_range(0.1..10.0);
            let a = rng.random_range(0.1..5.0);
            let d = rng.random_range(0.55..0.95);
            let exact = EnvelopeParams::new(y0, a, d, 0.0, 1).unwrap().extinction_time().unwrap();
            let num = ode_extinction_time(y0, a, d);
            assert!((num - exact).abs() <= 1e-6 * exact, "{y0} {a} {d}: {num} vs {exact}");
        }
    }

    #[test]
    fn floor_extinction_time() {
        let f = FloorParams { y0: 4.0, t0: 1.0, m: 0.5, im_a: 0.5, volume: 1.0 };
        // y^{1/4} = √2 decays at speed 0.25
        assert!((f.extinction_time() - (1.0 + 2f64.sqrt() / 0.25)).abs() < 1e-12);
        assert_eq!(f.value(100.0), 0.0);
        assert!((f.value(0.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn detection() {
        assert_eq!(detect_extinction(&ledger_from([(0.0, 0.0), (1.0, 0.0)]), 1e-12), Some(0.0));
        let exp = ledger_from((0..50).map(|k| (k as f64 * 0.1, (-(k as f64) * 0.1).exp())));
        assert_eq!(detect_extinction(&exp, 1e-12), None);
        let bounce = ledger_from([(0.0, 1.0), (1.0, 0.0), (2.0, 1e-3), (3.0, 0.0)]);
        assert_eq!(detect_extinction(&bounce, 1e-12), Some(3.0));
    }

    #[test]
    fn exponential_fit_recovers_rate() {
        let l = ledger_from((0..40).map(|k| (k as f64 * 0.05, 2.0 * (-3.0 * k as f64 * 0.05).exp())));
        let fit = decay_fit(&l, DecayKind::Exponential, [0.0, 2.0], &FitOptions::default()).unwrap();
        assert!((fit.rate_or_exponent - 3.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_fit_matches_envelope() {
        let env = EnvelopeParams::new(1.5, 0.8, 1.0, 0.0, 1).unwrap();
        let l = ledger_from((0..30).map(|k| (k as f64 * 0.1, env.value(k as f64 * 0.1))));
        let fit = decay_fit(&l, DecayKind::Exponential, [0.0, 3.0], &FitOptions::default()).unwrap();
        assert!((fit.rate_or_exponent - 2.0 * 0.8).abs() < 1e-6);
    }

    #[test]
    fn algebraic_fit_recovers_exponent() {
        let p: f64 = 4.0;
        let l = ledger_from((0..60).map(|k| {
            let t = 1.0 + k as f64 * 0.2;
            (t, (1.0 + 0.7 * (t - 1.0)).powf(-2.0 * p))
        }));
        let known = FitOptions { t0: 1.0, scale: Some(0.7), theoretical: Some(4.0) };
        let fit = decay_fit(&l, DecayKind::Algebraic, [1.0, 20.0], &known).unwrap();
        assert!((fit.rate_or_exponent - p).abs() < 1e-10);
        let free = FitOptions { scale: None, ..known };
        let fit = decay_fit(&l, DecayKind::Algebraic, [1.0, 20.0], &free).unwrap();
        assert!((fit.rate_or_exponent - p).abs() < 1e-4, "{fit:?}");
        assert!((fit.scale.unwrap() - 0.7).abs() < 1e-4);
    }

    #[test]
    fn fit_needs_enough_points() {
        let l = ledger_from((0..5).map(|k| (k as f64, 1.0)));
        assert!(matches!(
            decay_fit(&l, DecayKind::Exponential, [0.0, 10.0], &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn gn_estimate_single_entry() {
        let e = MassLedgerEntry {
            t: 0.5,
            mass: 4.0,
            absorption: 0.0,
            lmp1: 2.0,
            work: 0.0,
            step_defect: 0.0,
            identity_residual: 0.0,
            h1: 3.0,
            lapl2: 5.0,
        };
        let l = MassLedger::new(vec![e]);
        let est = gn_constant_estimate(&l, 1, 0.5, 1).unwrap();
        // θ = (3 + 0.5)/2 = 1.75, κ = 0.25
        assert!((est.c_gn - 2f64.powf(1.75) / (2.0 * 3f64.powf(0.25))).abs() < 1e-14);
        assert_eq!(est.argmax_t, 0.5);
        assert!(gn_constant_estimate(&ledger_from([(0.0, 0.0)]), 1, 0.5, 1).is_err());
    }

    #[test]
    fn theoretical_exponents() {
        assert_eq!(theoretical_exponent(3, 0.5, 1), Some(4.0));
        assert_eq!(theoretical_exponent(2, 0.5, 1), None);
        assert_eq!(theoretical_exponent(5, 0.5, 2), Some(8.0));
    }

    #[test]
    fn report_json_has_schema_version() {
        let l = ledger_from([(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)]);
        let inp = BoundInputs { dim: 1, m: 0.5, im_a: 0.35, volume: 1.0, ell: 1, t0: 0.0, slack: 0.05, threshold: 1e-12 };
        let b = bound_report(&l, &inp, 1.0).unwrap();
        let r = ExtinctionReport::from_bounds(b, None, None);
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["t_num"], 2.0);
    }

    proptest! {
        #[test]
        fn detection_monotone_in_threshold(masses in prop::collection::vec(0.0f64..1e-6, 1..40), lo in 1e-14f64..1e-8, k in 1.0f64..100.0) {
            let l = ledger_from(masses.iter().enumerate().map(|(j, m)| (j as f64, *m)));
            let small = detect_extinction(&l, lo);
            let large = detect_extinction(&l, lo * k);
            if let Some(s) = small {
                prop_assert!(large.is_some_and(|t| t <= s));
            }
        }

        #[test]
        fn envelope_nonincreasing(y0 in 0.0f64..10.0, a in 0.01f64..5.0, d in 0.51f64..1.5, t in 0.0f64..10.0, dt in 0.0f64..1.0) {
            let p = EnvelopeParams::new(y0, a, d, 0.0, 1).unwrap();
            prop_assert!(p.value(t + dt) <= p.value(t) * (1.0 + 1e-14));
            prop_assert!(p.value(t) >= 0.0);
        }
    }
}
