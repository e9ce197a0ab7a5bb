//! Scalar parameter theory: membership of the damping coefficient in the
//! cone `C(m)` / ray `D(m)`, the extinction exponents `δ_ℓ`, and the
//! smallness threshold `ε⋆`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the equality defining the ray `D(m)`.
pub const RAY_REL_TOL: f64 = 1e-12;

/// Absorption exponent `m`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_finite() && m > 0.0 && m < 1.0 {
            Ok(Exponent(m))
        } else {
            Err(Error::InvalidParameter(format!(
                "exponent m must satisfy 0 < m < 1, got {m}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `(1 - m) / (2 √m)`: slope of the critical ray `Im(a) = slope · Re(a)`.
    pub fn ray_slope(self) -> f64 {
        (1.0 - self.0) / (2.0 * self.0.sqrt())
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;
    fn try_from(m: f64) -> Result<Self> {
        Exponent::new(m)
    }
}

impl From<Exponent> for f64 {
    fn from(m: Exponent) -> f64 {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// On the critical ray `D(m)`.
    InD,
    /// In the cone `C(m)` but off the ray.
    InCOnly,
    Outside,
}

impl Classification {
    pub fn in_cone(self) -> bool {
        !matches!(self, Classification::Outside)
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::InD => "in D(m)",
            Classification::InCOnly => "in C(m) \\ D(m)",
            Classification::Outside => "outside C(m)",
        })
    }
}

/// Classifies `a` against `C(m) = {Im z > 0, 2√m Im z ≥ (1-m)|Re z|}` and
/// `D(m) = {Im z > 0, 2√m Im z = (1-m) Re z}`.
pub fn classify(a: Complex64, m: Exponent) -> Classification {
    let m = m.value();
    if !(a.im > 0.0) || !a.re.is_finite() || !a.im.is_finite() {
        return Classification::Outside;
    }
    let lhs = 2.0 * m.sqrt() * a.im;
    let rhs = (1.0 - m) * a.re;
    let scale = lhs.abs().max(rhs.abs());
    if (lhs - rhs).abs() <= RAY_REL_TOL * scale {
        Classification::InD
    } else if lhs >= (1.0 - m) * a.re.abs() {
        Classification::InCOnly
    } else {
        Classification::Outside
    }
}

/// A damping coefficient together with its classification for a given `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingCoefficient {
    pub value: Complex64,
    pub classification: Classification,
}

impl DampingCoefficient {
    pub fn new(a: Complex64, m: Exponent) -> Self {
        DampingCoefficient {
            value: a,
            classification: classify(a, m),
        }
    }

    /// Like [`DampingCoefficient::new`] but refuses coefficients outside `C(m)`.
    pub fn in_cone(a: Complex64, m: Exponent) -> Result<Self> {
        let c = Self::new(a, m);
        if c.classification.in_cone() {
            Ok(c)
        } else {
            Err(Error::InvalidParameter(format!(
                "a = {a} is outside C({m}): need Im(a) > 0 and 2√m·Im(a) ≥ (1-m)·|Re(a)|",
                m = m.value()
            )))
        }
    }

    pub fn on_ray(m: Exponent, re: f64) -> Result<Self> {
        Ok(Self::new(make_dm_coefficient(m, re)?, m))
    }

    pub fn im(&self) -> f64 {
        self.value.im
    }
}

/// The point of `D(m)` with real part `re`: `re + i (1-m) re / (2√m)`.
pub fn make_dm_coefficient(m: Exponent, re: f64) -> Result<Complex64> {
    if !(re > 0.0) || !re.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "real part on the critical ray must be positive, got {re}"
        )));
    }
    Ok(Complex64::new(re, m.ray_slope() * re))
}

/// `δ_ℓ = ((N + 2ℓ) - m (N - 2ℓ)) / (4ℓ)`.
///
/// Only the pairs with a Gagliardo–Nirenberg interpolation are accepted: `ℓ = 1` with
/// `N ≤ 3`, `ℓ = 2` with `N ≤ 5`.
pub fn delta(n: usize, ell: usize, m: Exponent) -> Result<f64> {
    let ok = matches!((ell, n), (1, 1..=3) | (2, 1..=5));
    if !ok {
        return Err(Error::InvalidParameter(format!(
            "no extinction exponent for N = {n}, ℓ = {ell}"
        )));
    }
    let (n, ell) = (n as f64, ell as f64);
    Ok(((n + 2.0 * ell) - m.value() * (n - 2.0 * ell)) / (4.0 * ell))
}

/// Smallness threshold: the minimum of the two closed-form bounds
///
/// ```text
/// (2δ-1)^{-(2δ-1)/δ} (αδ)^{1/(1-δ)} (1-δ)^{(2δ-1)/(δ(1-δ))}   and   αδ(1-δ).
/// ```
pub fn eps_star(alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eps_star needs α > 0, got {alpha}"
        )));
    }
    if !(delta > 0.5 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps_star needs δ in (1/2, 1), got {delta}"
        )));
    }
    let d = delta;
    let s = 2.0 * d - 1.0;
    // Evaluated in log space: (αδ)^{1/(1-δ)} under- or overflows quickly.
    let log_first = -(s / d) * s.ln() + (alpha * d).ln() / (1.0 - d) + (s / (d * (1.0 - d))) * (1.0 - d).ln();
    let first = log_first.exp();
    let second = alpha * d * (1.0 - d);
    Ok(first.min(second))
}

/// Exponents entering the comparison ODE `y' + 2 α_ℓ y^{δ_ℓ} ≤ 2 ‖f‖ y^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionExponents {
    pub n: usize,
    pub ell: usize,
    pub delta: f64,
    /// `Im(a) / C_GN`.
    pub alpha: f64,
    /// `α · sup_t ‖∇^ℓ u(t)‖^{-N(1-m)/(2ℓ)}`.
    pub alpha_ell: f64,
    /// Present only when `δ_ℓ ∈ (1/2, 1)`.
    pub eps_star: Option<f64>,
}

impl ExtinctionExponents {
    pub fn new(
        n: usize,
        ell: usize,
        m: Exponent,
        im_a: f64,
        c_gn: f64,
        sup_grad_norm: f64,
    ) -> Result<Self> {
        let delta = delta(n, ell, m)?;
        if !(c_gn > 0.0) || !c_gn.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Gagliardo–Nirenberg constant must be positive and finite, got {c_gn}"
            )));
        }
        let alpha = im_a / c_gn;
        let kappa = n as f64 * (1.0 - m.value()) / (2.0 * ell as f64);
        let alpha_ell = if sup_grad_norm > 0.0 {
            alpha * sup_grad_norm.powf(-kappa)
        } else {
            f64::INFINITY
        };
        let eps_star = eps_star(alpha, delta).ok();
        Ok(ExtinctionExponents {
            n,
            ell,
            delta,
            alpha,
            alpha_ell,
            eps_star,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ConditionCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs + 1e-12 * lhs.abs().max(rhs.abs());
        ConditionCheck { lhs, rhs, holds }
    }
}

/// Inputs to [`smallness_check`].
pub struct SmallnessInputs<'a> {
    /// `‖u0‖_{L²}`.
    pub u0_l2: f64,
    /// `‖∇u0‖_{L²}` (ℓ = 1) or `‖u0‖_⋆` (ℓ = 2).
    pub data_norm: f64,
    /// `‖∇f‖_{L¹(L²)}` (ℓ = 1) or `‖f‖_{W^{1,1}(L²)}` (ℓ = 2).
    pub forcing_budget: f64,
    /// `t ↦ ‖f(t)‖_{L²}`.
    pub forcing_l2: &'a dyn Fn(f64) -> f64,
    /// Times at which the pointwise forcing envelope is sampled.
    pub sample_times: &'a [f64],
    pub t0: f64,
    pub eps_star: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    /// `‖u0‖^{2(1-δ)} ≤ ε⋆ T0`.
    pub mass_vs_t0: ConditionCheck,
    /// `data_norm + forcing_budget ≤ ε⋆`.
    pub data_smallness: ConditionCheck,
    /// Worst sample of `‖f(t)‖² ≤ ε⋆ (T0 - t)_+^{(2δ-1)/(1-δ)}` (by `lhs - rhs`).
    pub forcing_envelope: ConditionCheck,
    /// Time of the worst forcing sample.
    pub worst_time: f64,
}

impl SmallnessReport {
    pub fn passed(&self) -> bool {
        self.mass_vs_t0.holds && self.data_smallness.holds && self.forcing_envelope.holds
    }
}

/// Evaluates the three smallness conditions under which extinction happens by `T0`.
pub fn smallness_check(inp: &SmallnessInputs<'_>) -> SmallnessReport {
    let d = inp.delta;
    let mass_vs_t0 = ConditionCheck::new(
        inp.u0_l2.powf(2.0 * (1.0 - d)),
        inp.eps_star * inp.t0,
    );
    let data_smallness = ConditionCheck::new(inp.data_norm + inp.forcing_budget, inp.eps_star);

    let power = (2.0 * d - 1.0) / (1.0 - d);
    let mut forcing_envelope = ConditionCheck::new(0.0, 0.0);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    for &t in inp.sample_times {
        let f = (inp.forcing_l2)(t);
        let rhs = inp.eps_star * (inp.t0 - t).max(0.0).powf(power);
        let check = ConditionCheck::new(f * f, rhs);
        let gap = check.lhs - check.rhs;
        let worse = (!check.holds && forcing_envelope.holds) || (check.holds == forcing_envelope.holds && gap > worst_gap);
        if worse {
            worst_gap = gap;
            worst_time = t;
            forcing_envelope = check;
        }
    }
    SmallnessReport {
        mass_vs_t0,
        data_smallness,
        forcing_envelope,
        worst_time,
    }
}
