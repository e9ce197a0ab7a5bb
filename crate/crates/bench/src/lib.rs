//! Fixtures shared by the kernel benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use dnls_core::coeff::make_dm_coefficient;
use dnls_core::{AbsorptionParams, Complex64, Exponent, Field, GridSpec};

pub fn grid(dim: usize, n: usize) -> Arc<GridSpec> {
    Arc::new(GridSpec::cube(dim, 1.0, n).expect("valid cube"))
}

/// Product of first sine modes with a phase twist, so both real and imaginary parts are active.
pub fn smooth_field(grid: &Arc<GridSpec>) -> Field {
    let dim = grid.dim();
    Field::from_fn(grid.clone(), |x| {
        let amp: f64 = (0..dim).map(|k| (PI * x[k]).sin()).product();
        Complex64::from_polar(amp, 2.0 * PI * x[0])
    })
}

pub fn params(m: f64, eps: f64) -> AbsorptionParams {
    let m = Exponent::new(m).expect("m in (0,1)");
    AbsorptionParams::new(m, make_dm_coefficient(m, 1.0).expect("finite ray"), eps).expect("valid parameters")
}
