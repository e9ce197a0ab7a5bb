//! Rectangular Dirichlet domains and the discrete operators living on them.
//!
//! A [`GridSpec`] describes the box `Π [0, L_k]` sampled at `n_k` interior
//! nodes per axis with spacing `h_k = L_k / (n_k + 1)`. Boundary values are
//! identically zero and never stored. Node values are flattened in row-major
//! order: the last axis varies fastest.
//!
//! Discrete integrals use the midpoint rule `∫ w ≈ (Π h_k) Σ_j w_j`, and the
//! gradient is the forward difference with Dirichlet closure, so that
//! `-Re⟨Δu, u⟩ = ‖∇u‖²` holds exactly (summation by parts).

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    lengths: Vec<f64>,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(lengths: &[f64], counts: &[usize]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "grid dimension must be 1, 2 or 3, got {}",
                lengths.len()
            )));
        }
        if lengths.len() != counts.len() {
            return Err(Error::InvalidParameter(
                "lengths and counts must have the same number of axes".into(),
            ));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "axis lengths must be positive, got {l}"
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidParameter(
                "each axis needs at least one interior node".into(),
            ));
        }
        Ok(GridSpec {
            lengths: lengths.to_vec(),
            counts: counts.to_vec(),
        })
    }

    /// Cube `[0, L]^dim` with `n` interior nodes per axis.
    pub fn cube(dim: usize, length: f64, n: usize) -> Result<Self> {
        Self::new(&vec![length; dim], &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / (self.counts[axis] + 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.spacing(k)).collect()
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `Π h_k`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    /// `|Ω| = Π L_k`.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Distance in memory between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }

    /// Physical coordinates of node `index`; unused axes are zero.
    pub fn coordinates(&self, index: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        let mut rem = index;
        for k in (0..self.dim()).rev() {
            let i = rem % self.counts[k];
            rem /= self.counts[k];
            x[k] = (i + 1) as f64 * self.spacing(k);
        }
        x
    }

    /// Per-axis node indices of `index`.
    pub fn multi_index(&self, index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rem = index;
        for k in (0..self.dim()).rev() {
            out[k] = rem % self.counts[k];
            rem /= self.counts[k];
        }
        out
    }

    /// Calls `f(base)` for the first node of every grid line parallel to `axis`.
    fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize)) {
        let n = self.counts[axis];
        let stride = self.stride(axis);
        let outer: usize = self.counts[..axis].iter().product();
        for o in 0..outer {
            for i in 0..stride {
                f(o * n * stride + i);
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "expected {} nodes, got {len}",
                self.len()
            )))
        }
    }
}

/// Complex state on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<GridSpec>,
    values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Field { grid, values }
    }

    pub fn from_values(grid: Arc<GridSpec>, values: Vec<Complex64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Field { grid, values })
    }

    /// Samples `f(x)` at every interior node.
    pub fn from_fn(grid: Arc<GridSpec>, mut f: impl FnMut([f64; MAX_DIM]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.coordinates(j))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> Field {
        self.map(|z| s * z)
    }

    /// `self - other`.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.ensure_same_grid(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `self + s · other`.
    pub fn axpy(&self, s: Complex64, other: &Field) -> Result<Field> {
        self.ensure_same_grid(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    /// Discrete `L²` inner product `(Π h) Σ u conj(v)`.
    pub fn inner(&self, other: &Field) -> Complex64 {
        inner(&self.grid, &self.values, &other.values)
    }

    pub fn l2(&self) -> f64 {
        l2_norm(&self.grid, &self.values)
    }

    pub fn mass(&self) -> f64 {
        mass(&self.grid, &self.values)
    }

    pub fn lp(&self, p: f64) -> f64 {
        lp_norm(&self.grid, &self.values, p)
    }

    pub fn h1_seminorm(&self) -> f64 {
        h1_seminorm(&self.grid, &self.values)
    }

    pub fn laplacian_l2(&self) -> f64 {
        let mut lap = vec![Complex64::new(0.0, 0.0); self.values.len()];
        laplacian_into(&self.grid, &self.values, &mut lap);
        l2_norm(&self.grid, &lap)
    }

    /// `‖u‖_{m+1}^{m+1}`.
    pub fn lmp1_power(&self, m: f64) -> f64 {
        lmp1_power(&self.grid, &self.values, m)
    }

    pub fn norms(&self, m: f64) -> FieldNorms {
        FieldNorms {
            l2: self.l2(),
            lmp1_power: self.lmp1_power(m),
            h1_seminorm: self.h1_seminorm(),
            laplacian_l2: self.laplacian_l2(),
            sup: self.lp(f64::INFINITY),
        }
    }

    /// Writes `index,re,im` rows (with a header line).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,re,im")?;
        for (j, z) in self.values.iter().enumerate() {
            writeln!(w, "{j},{:e},{:e}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(grid: Arc<GridSpec>, r: R) -> Result<Field> {
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut seen = vec![false; grid.len()];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("snapshot line {}: {line:?}", lineno + 1));
            if cols.len() != 3 {
                return Err(bad());
            }
            let j: usize = cols[0].parse().map_err(|_| bad())?;
            let re: f64 = cols[1].parse().map_err(|_| bad())?;
            let im: f64 = cols[2].parse().map_err(|_| bad())?;
            if j >= values.len() {
                return Err(Error::GridMismatch(format!(
                    "node index {j} out of range for {} nodes",
                    values.len()
                )));
            }
            values[j] = Complex64::new(re, im);
            seen[j] = true;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Parse(format!("snapshot is missing node {j}")));
        }
        Ok(Field { grid, values })
    }

    /// Flat little-endian `f64` pairs `(re, im)` in node order, no header.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for z in &self.values {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(grid: Arc<GridSpec>, mut r: R) -> Result<Field> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 16 * grid.len() {
            return Err(Error::GridMismatch(format!(
                "binary snapshot has {} bytes, expected {}",
                bytes.len(),
                16 * grid.len()
            )));
        }
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Field { grid, values })
    }

    /// Loads a snapshot, choosing the format from the extension (`.csv` or binary).
    pub fn load(grid: Arc<GridSpec>, path: &Path) -> Result<Field> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Field::read_csv(grid, std::io::BufReader::new(file))
        } else {
            Field::read_binary(grid, file)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub l2: f64,
    pub lmp1_power: f64,
    pub h1_seminorm: f64,
    pub laplacian_l2: f64,
    pub sup: f64,
}

pub fn inner(grid: &GridSpec, u: &[Complex64], v: &[Complex64]) -> Complex64 {
    let s: Complex64 = u.iter().zip(v).map(|(a, b)| a * b.conj()).sum();
    s * grid.cell_volume()
}

pub fn mass(grid: &GridSpec, u: &[Complex64]) -> f64 {
    grid.cell_volume() * u.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

pub fn l2_norm(grid: &GridSpec, u: &[Complex64]) -> f64 {
    mass(grid, u).sqrt()
}

/// Discrete `L^p` norm for `p ∈ (0, ∞]`; `p = ∞` is the nodal maximum.
pub fn lp_norm(grid: &GridSpec, u: &[Complex64], p: f64) -> f64 {
    if p == f64::INFINITY {
        return u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    assert!(p > 0.0, "L^p norm needs p > 0");
    let s: f64 = u.iter().map(|z| z.norm().powf(p)).sum();
    (grid.cell_volume() * s).powf(1.0 / p)
}

pub fn lmp1_power(grid: &GridSpec, u: &[Complex64], m: f64) -> f64 {
    grid.cell_volume() * u.iter().map(|z| z.norm().powf(m + 1.0)).sum::<f64>()
}

/// Forward-difference gradient norm with zero Dirichlet closure on both ends.
pub fn h1_seminorm(grid: &GridSpec, u: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for axis in 0..grid.dim() {
        let n = grid.counts[axis];
        let s = grid.stride(axis);
        let inv_h2 = 1.0 / grid.spacing(axis).powi(2);
        let mut acc = 0.0;
        grid.for_each_line(axis, |base| {
            let mut prev = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let cur = u[base + j * s];
                acc += (cur - prev).norm_sqr();
                prev = cur;
            }
            acc += prev.norm_sqr();
        });
        total += acc * inv_h2;
    }
    (total * grid.cell_volume()).sqrt()
}

/// `out = Δu` with the `2N+1`-point central stencil and zero Dirichlet data.
pub fn laplacian_into(grid: &GridSpec, u: &[Complex64], out: &mut [Complex64]) {
    debug_assert_eq!(u.len(), out.len());
    out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    for axis in 0..grid.dim() {
        let n = grid.counts[axis];
        let s = grid.stride(axis);
        let inv_h2 = 1.0 / grid.spacing(axis).powi(2);
        grid.for_each_line(axis, |base| {
            for j in 0..n {
                let idx = base + j * s;
                let left = if j > 0 { u[idx - s] } else { Complex64::new(0.0, 0.0) };
                let right = if j + 1 < n { u[idx + s] } else { Complex64::new(0.0, 0.0) };
                out[idx] += (left - 2.0 * u[idx] + right) * inv_h2;
            }
        });
    }
}

pub fn laplacian(u: &Field) -> Field {
    let mut out = Field::zeros(u.grid.clone());
    laplacian_into(&u.grid, &u.values, &mut out.values);
    out
}

/// Real potential sampled as `V = V1 + V2` (bounded part plus `L^{p_V}` part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    v1: Vec<f64>,
    v2: Vec<f64>,
    p_v: f64,
    beta: Option<f64>,
}

/// Integrability exponent of the unbounded part: 2 (N = 1), 2 + β (N = 2), N (N ≥ 3).
pub fn potential_exponent(dim: usize, beta: Option<f64>) -> Result<f64> {
    match dim {
        1 => Ok(2.0),
        2 => match beta {
            Some(b) if b > 0.0 && b.is_finite() => Ok(2.0 + b),
            _ => Err(Error::InvalidParameter(
                "two-dimensional potentials need β > 0".into(),
            )),
        },
        n => Ok(n as f64),
    }
}

impl PotentialSpec {
    pub fn from_parts(grid: &GridSpec, v1: Vec<f64>, v2: Vec<f64>, beta: Option<f64>) -> Result<Self> {
        grid.check_len(v1.len())?;
        grid.check_len(v2.len())?;
        if v1.iter().chain(&v2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("potential samples must be finite".into()));
        }
        let beta = if grid.dim() == 2 { Some(beta.unwrap_or(1.0)) } else { beta };
        let p_v = potential_exponent(grid.dim(), beta)?;
        Ok(PotentialSpec { v1, v2, p_v, beta })
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self::from_parts(grid, vec![c; grid.len()], vec![0.0; grid.len()], None)
            .expect("constant potential is always valid")
    }

    pub fn len(&self) -> usize {
        self.v1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v1.is_empty()
    }

    pub fn v1(&self) -> &[f64] {
        &self.v1
    }

    pub fn v2(&self) -> &[f64] {
        &self.v2
    }

    pub fn p_v(&self) -> f64 {
        self.p_v
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// Pointwise `V1 + V2`.
    pub fn total(&self) -> Vec<f64> {
        self.v1.iter().zip(&self.v2).map(|(a, b)| a + b).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.v1.iter().chain(&self.v2).all(|v| *v == 0.0)
    }

    /// True when `∇V = 0` on the grid.
    pub fn is_constant(&self) -> bool {
        let t = self.total();
        t.iter().all(|v| *v == t[0])
    }

    pub fn sup_v1(&self) -> f64 {
        self.v1.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn lp_v2(&self, grid: &GridSpec) -> f64 {
        let s: f64 = self.v2.iter().map(|v| v.abs().powf(self.p_v)).sum();
        (grid.cell_volume() * s).powf(1.0 / self.p_v)
    }
}

/// Pointwise `(V1 + V2) u`.
pub fn apply_potential(u: &Field, v: &PotentialSpec) -> Result<Field> {
    u.grid.check_len(v.len())?;
    let values = u
        .values
        .iter()
        .zip(v.v1.iter().zip(&v.v2))
        .map(|(z, (a, b))| z * (a + b))
        .collect();
    Ok(Field {
        grid: u.grid.clone(),
        values,
    })
}

/// Sine-transform diagonalisation of the Dirichlet Laplacian on a box.
///
/// Each axis has the orthogonal symmetric basis
/// `S_{jk} = √(2/(n+1)) sin((j+1)(k+1)π/(n+1))` with eigenvalues
/// `-(4/h²) sin²((k+1)π/(2(n+1)))`. Transforms are dense per axis, which is
/// cheap for the grid sizes this crate targets.
#[derive(Debug, Clone)]
pub struct DirichletSpectrum {
    grid: Arc<GridSpec>,
    bases: Vec<Vec<f64>>,
    /// Eigenvalue of `Δ` for every node of the transformed array.
    eigenvalues: Vec<f64>,
}

/// Eigenvalues of the 1D Dirichlet second difference on `n` nodes of spacing `h`.
pub fn dirichlet_eigenvalues_1d(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = ((k + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin();
            -4.0 / (h * h) * s * s
        })
        .collect()
}

impl DirichletSpectrum {
    pub fn new(grid: Arc<GridSpec>) -> Self {
        let mut bases = Vec::with_capacity(grid.dim());
        let mut axis_eigs = Vec::with_capacity(grid.dim());
        for axis in 0..grid.dim() {
            let n = grid.counts[axis];
            let norm = (2.0 / (n + 1) as f64).sqrt();
            let mut b = vec![0.0; n * n];
            for j in 0..n {
                for k in 0..n {
                    b[j * n + k] = norm
                        * (((j + 1) * (k + 1)) as f64 * std::f64::consts::PI / (n + 1) as f64).sin();
                }
            }
            bases.push(b);
            axis_eigs.push(dirichlet_eigenvalues_1d(n, grid.spacing(axis)));
        }
        let eigenvalues = (0..grid.len())
            .map(|j| {
                let idx = grid.multi_index(j);
                (0..grid.dim()).map(|k| axis_eigs[k][idx[k]]).sum()
            })
            .collect();
        DirichletSpectrum {
            grid,
            bases,
            eigenvalues,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// In-place sine transform along every axis (self-inverse).
    pub fn transform(&self, u: &mut [Complex64]) {
        let grid = &*self.grid;
        let mut line = Vec::new();
        for axis in 0..grid.dim() {
            let n = grid.counts[axis];
            let s = grid.stride(axis);
            let b = &self.bases[axis];
            line.resize(n, Complex64::new(0.0, 0.0));
            grid.for_each_line(axis, |base| {
                for j in 0..n {
                    line[j] = u[base + j * s];
                }
                for k in 0..n {
                    let row = &b[k * n..(k + 1) * n];
                    let acc: Complex64 = row.iter().zip(&line).map(|(c, z)| z * c).sum();
                    u[base + k * s] = acc;
                }
            });
        }
    }

    /// Solves `(σ + β Δ) w = r` in place.
    pub fn solve_shifted(&self, sigma: Complex64, beta: Complex64, r: &mut [Complex64]) {
        self.transform(r);
        for (z, lam) in r.iter_mut().zip(&self.eigenvalues) {
            *z /= sigma + beta * lam;
        }
        self.transform(r);
    }
}

/// Human-readable one-line description, used in reports.
pub fn describe(grid: &GridSpec) -> String {
    let mut s = String::new();
    for k in 0..grid.dim() {
        if k > 0 {
            s.push_str(" × ");
        }
        let _ = write!(s, "[0, {}]:{}", grid.lengths[k], grid.counts[k]);
    }
    s
}
