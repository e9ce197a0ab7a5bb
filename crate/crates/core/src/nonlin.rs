//! Saturating absorption `g_ε(z) = (|z|² + ε)^{-(1-m)/2} z` and its pointwise
//! certificates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeff::{DampingCoefficient, Exponent};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionParams {
    pub m: Exponent,
    pub a: DampingCoefficient,
    /// Regularisation; `ε = 0` is the pure sublinear law.
    pub eps: f64,
}

impl AbsorptionParams {
    /// Rejects `ε < 0` and coefficients outside the cone `C(m)`.
    pub fn new(m: Exponent, a: Complex64, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "regularisation ε must be finite and nonnegative, got {eps}"
            )));
        }
        Ok(AbsorptionParams {
            m,
            a: DampingCoefficient::in_cone(a, m)?,
            eps,
        })
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.m, self.a.value, eps)
    }

    pub fn a(&self) -> Complex64 {
        self.a.value
    }
}

/// Pointwise `g_ε`, extended by `0` at `z = 0`.
#[inline]
pub fn g_point(z: Complex64, m: f64, eps: f64) -> Complex64 {
    let s = z.norm_sqr() + eps;
    if z == Complex64::new(0.0, 0.0) || s == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z * (-(1.0 - m) * 0.5 * s.ln()).exp()
}

/// `(|z|² + ε)^{-(1-m)/2}`, the saturation factor; infinite at `z = 0, ε = 0`.
#[inline]
pub fn saturation(z: Complex64, m: f64, eps: f64) -> f64 {
    let s = z.norm_sqr() + eps;
    (-(1.0 - m) * 0.5 * s.ln()).exp()
}

/// Real-linearisation of `g_ε` at `z`: `Dg_ε(z)[w] = p w + q conj(w)`.
///
/// Requires `|z|² + ε > 0`.
#[inline]
pub fn g_linearization(z: Complex64, m: f64, eps: f64) -> (f64, Complex64) {
    let s = z.norm_sqr() + eps;
    let phi = (-(1.0 - m) * 0.5 * s.ln()).exp();
    // c = 2 φ'(s) = -(1-m) φ / s
    let c = -(1.0 - m) * phi / s;
    (phi + 0.5 * c * z.norm_sqr(), 0.5 * c * z * z)
}

pub fn g_eps(u: &Field, params: &AbsorptionParams) -> Field {
    let (m, eps) = (params.m.value(), params.eps);
    u.map(|z| g_point(z, m, eps))
}

/// `(Π h) Σ (|u|² + ε)^{-(1-m)/2} |u|²`.
pub fn absorption(grid: &GridSpec, u: &[Complex64], m: f64, eps: f64) -> f64 {
    let s: f64 = u
        .iter()
        .map(|z| {
            let r2 = z.norm_sqr();
            if r2 == 0.0 {
                0.0
            } else {
                r2 * saturation(*z, m, eps)
            }
        })
        .sum();
    grid.cell_volume() * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCertificate {
    /// `‖g(u) - g(v)‖_{p/m}`.
    pub lhs: f64,
    /// `3 ‖u - v‖_p^m`.
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `‖g_0(u) - g_0(v)‖_{L^{p/m}} ≤ 3 ‖u - v‖_{L^p}^m` on the grid.
pub fn holder_certificate(u: &Field, v: &Field, p: f64, m: Exponent) -> Result<HolderCertificate> {
    u.ensure_same_grid(v)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Hölder certificate needs p in [1, ∞), got {p}"
        )));
    }
    let mv = m.value();
    let gdiff: Vec<Complex64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| g_point(*a, mv, 0.0) - g_point(*b, mv, 0.0))
        .collect();
    let grid = u.grid();
    let lhs = crate::grid::lp_norm(grid, &gdiff, p / mv);
    let rhs = 3.0 * u.sub(v)?.lp(p).powf(mv);
    Ok(HolderCertificate {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// `Re[-i a (g(z1) - g(z2)) conj(z1 - z2)]` with the unregularised `g`.
///
/// Nonnegative for every pair exactly when `a ∈ C(m)`; this is the pointwise
/// content of the monotonicity of the absorption operator.
pub fn accretivity_witness(z1: Complex64, z2: Complex64, a: Complex64, m: Exponent) -> f64 {
    let mv = m.value();
    let x = (g_point(z1, mv, 0.0) - g_point(z2, mv, 0.0)) * (z1 - z2).conj();
    // Re[-i a x] = Im(a) Re(x) + Re(a) Im(x)
    a.im * x.re + a.re * x.im
}
