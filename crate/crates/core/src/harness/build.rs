//! Turns a validated [`RunConfig`] into the objects the solver consumes.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolve::{ForcingClass, ForcingSpec, RunSetup, TimeGrid};
use crate::grid::{Field, GridSpec, PotentialSpec, MAX_DIM};
use crate::nonlin::AbsorptionParams;

use super::config::{ForcingConfig, InitialConfig, PotentialConfig, ProfileConfig, RunConfig, SnapshotFormat};

/// Independent random streams derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Potential = 0,
    Initial = 1,
    Forcing = 2,
    PartnerInitial = 3,
    PartnerForcing = 4,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn build_grid(cfg: &RunConfig) -> Result<Arc<GridSpec>> {
    cfg.grid.spec().map(Arc::new)
}

pub fn build_params(cfg: &RunConfig) -> Result<AbsorptionParams> {
    AbsorptionParams::new(cfg.equation.exponent(), cfg.equation.coefficient(), cfg.equation.eps)
}

fn centre(grid: &GridSpec, given: &Option<Vec<f64>>) -> [f64; MAX_DIM] {
    let mut c = [0.0; MAX_DIM];
    for (k, ck) in c.iter_mut().enumerate().take(grid.dim()) {
        *ck = given.as_ref().map_or(0.5 * grid.lengths()[k], |v| v[k]);
    }
    c
}

fn dist2(grid: &GridSpec, x: &[f64; MAX_DIM], c: &[f64; MAX_DIM]) -> f64 {
    (0..grid.dim()).map(|k| (x[k] - c[k]).powi(2)).sum()
}

fn sine_mode(grid: &GridSpec, x: &[f64; MAX_DIM], modes: &[usize]) -> f64 {
    (0..grid.dim()).map(|k| (modes[k] as f64 * PI * x[k] / grid.lengths()[k]).sin()).product()
}

pub fn build_potential(cfg: &RunConfig, grid: &GridSpec) -> Result<PotentialSpec> {
    let n = grid.len();
    match &cfg.potential {
        PotentialConfig::Zero => PotentialSpec::from_parts(grid, vec![0.0; n], vec![0.0; n], cfg.beta),
        PotentialConfig::Constant { value } => PotentialSpec::from_parts(grid, vec![*value; n], vec![0.0; n], cfg.beta),
        PotentialConfig::Harmonic { omega, center } => {
            let c = centre(grid, center);
            let v1 = (0..n).map(|j| -omega * omega * dist2(grid, &grid.coordinates(j), &c)).collect();
            PotentialSpec::from_parts(grid, v1, vec![0.0; n], cfg.beta)
        }
        PotentialConfig::Random { amplitude, tail_amplitude, tail_exponent } => {
            let mut rng = rng_for(cfg.seed, Stream::Potential);
            let v1 = (0..n).map(|_| amplitude * rng.random_range(-1.0..1.0)).collect();
            let c = centre(grid, &None);
            let h = grid.spacings().into_iter().fold(f64::INFINITY, f64::min);
            let v2 = (0..n)
                .map(|j| {
                    let r = dist2(grid, &grid.coordinates(j), &c).sqrt().max(0.5 * h);
                    tail_amplitude * r.powf(-tail_exponent)
                })
                .collect();
            PotentialSpec::from_parts(grid, v1, v2, cfg.beta)
        }
    }
}

pub fn build_initial(init: &InitialConfig, grid: &Arc<GridSpec>, seed: u64, stream: Stream) -> Result<Field> {
    match init {
        InitialConfig::Zero => Ok(Field::zeros(grid.clone())),
        InitialConfig::Gaussian { amplitude, width, center, wavevector } => {
            let c = centre(grid, center);
            let k = wavevector.clone().unwrap_or_default();
            Ok(Field::from_fn(grid.clone(), |x| {
                let phase: f64 = k.iter().enumerate().map(|(j, kj)| kj * x[j]).sum();
                amplitude * (-dist2(grid, &x, &c) / (2.0 * width * width)).exp() * Complex64::from_polar(1.0, phase)
            }))
        }
        InitialConfig::Sine { amplitude, modes } => {
            Ok(Field::from_fn(grid.clone(), |x| Complex64::new(amplitude * sine_mode(grid, &x, modes), 0.0)))
        }
        InitialConfig::Random { amplitude, modes } => {
            let mut rng = rng_for(seed, stream);
            let dim = grid.dim();
            let total = modes.pow(dim as u32);
            let terms: Vec<(Vec<usize>, Complex64)> = (0..total)
                .map(|mut idx| {
                    let ks: Vec<usize> = (0..dim)
                        .map(|_| {
                            let k = idx % modes + 1;
                            idx /= modes;
                            k
                        })
                        .collect();
                    let k2: f64 = ks.iter().map(|k| (k * k) as f64).sum();
                    let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) / k2;
                    (ks, c)
                })
                .collect();
            let u = Field::from_fn(grid.clone(), |x| terms.iter().map(|(ks, c)| c * sine_mode(grid, &x, ks)).sum());
            let norm = u.l2();
            Ok(if norm > 0.0 { u.scaled(Complex64::new(amplitude / norm, 0.0)) } else { u })
        }
        InitialConfig::File { path, format } => load_state(grid, path, *format),
    }
}

pub fn load_state(grid: &Arc<GridSpec>, path: &Path, format: SnapshotFormat) -> Result<Field> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    match format {
        SnapshotFormat::Csv => Field::read_csv(grid.clone(), BufReader::new(file)),
        SnapshotFormat::Binary => Field::read_binary(grid.clone(), BufReader::new(file)),
    }
}

/// Reads `t,index,re,im` rows (header optional) into frames.
pub fn load_forcing(grid: &GridSpec, path: &Path, class: ForcingClass) -> Result<ForcingSpec> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut times: Vec<f64> = Vec::new();
    let mut frames: Vec<Vec<Complex64>> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('t') {
            continue;
        }
        let bad = || Error::Parse(format!("{}:{}: expected t,index,re,im", path.display(), lineno + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(bad());
        }
        let t: f64 = cols[0].parse().map_err(|_| bad())?;
        let idx: usize = cols[1].parse().map_err(|_| bad())?;
        let z = Complex64::new(cols[2].parse().map_err(|_| bad())?, cols[3].parse().map_err(|_| bad())?);
        if times.last() != Some(&t) {
            times.push(t);
            frames.push(vec![Complex64::new(0.0, 0.0); grid.len()]);
        }
        let frame = frames.last_mut().expect("pushed above");
        *frame.get_mut(idx).ok_or_else(bad)? = z;
    }
    ForcingSpec::sampled(grid, times, frames, class)
}

pub fn build_forcing(fc: &ForcingConfig, grid: &Arc<GridSpec>) -> Result<ForcingSpec> {
    match fc {
        ForcingConfig::Zero => Ok(ForcingSpec::zero()),
        ForcingConfig::Windowed { profile, temporal, cutoff, class } => {
            let phi = match profile {
                ProfileConfig::Sine { amplitude, modes } => {
                    Field::from_fn(grid.clone(), |x| Complex64::new(amplitude * sine_mode(grid, &x, modes), 0.0))
                }
                ProfileConfig::Gaussian { amplitude, width, center } => {
                    let c = centre(grid, center);
                    Field::from_fn(grid.clone(), |x| {
                        Complex64::new(amplitude * (-dist2(grid, &x, &c) / (2.0 * width * width)).exp(), 0.0)
                    })
                }
            };
            ForcingSpec::separable(&phi, *temporal, *cutoff, *class)
        }
        ForcingConfig::File { path, class } => load_forcing(grid, path, *class),
    }
}

/// Main trajectory described by the configuration.
pub fn build_setup(cfg: &RunConfig) -> Result<RunSetup> {
    let grid = build_grid(cfg)?;
    let params = build_params(cfg)?;
    let potential = build_potential(cfg, &grid)?;
    let u0 = build_initial(&cfg.initial, &grid, cfg.seed, Stream::Initial)?;
    let forcing = build_forcing(&cfg.forcing, &grid)?;
    let mut setup = RunSetup::new(params, potential, u0, forcing, TimeGrid::new(cfg.time.dt, cfg.time.steps)?);
    setup.scheme = cfg.time.scheme;
    setup.solver = cfg.solver;
    setup.snapshot_stride = cfg.output.snapshot_stride;
    Ok(setup)
}

/// Second trajectory for contraction checks, or `None` without a `[partner]` section.
pub fn build_partner(cfg: &RunConfig, main: &RunSetup) -> Result<Option<RunSetup>> {
    let Some(p) = &cfg.partner else { return Ok(None) };
    let grid = main.grid();
    let mut setup = main.clone();
    if let Some(init) = &p.initial {
        setup.u0 = build_initial(init, grid, cfg.seed, Stream::PartnerInitial)?;
    }
    if let Some(f) = &p.forcing {
        setup.forcing = build_forcing(f, grid)?;
    }
    Ok(Some(setup))
}
