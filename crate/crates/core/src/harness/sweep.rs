//! Parameter sweeps over `m`, `Re(a)`, `Δt` and the grid resolution.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Field;

use super::config::{CoefficientConfig, ConfigError, RunConfig};
use super::scenario::{execute, write_outputs};
use super::ExitStatus;

pub const SWEEP_HEADER: &str = "point,m,re,dt,n,exit_code,t_num,fitted_rate,max_identity_residual,order";

/// Cartesian product of parameter lists applied on top of a base configuration.
///
/// Empty lists keep the base value. Changing `dt` keeps the horizon fixed.
/// Giving `re` places the coefficient on the critical ray.
#[derive(Debug, Clone, Default)]
pub struct SweepSpec {
    pub m: Vec<f64>,
    pub re: Vec<f64>,
    pub dt: Vec<f64>,
    /// Nodes per axis.
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub point: usize,
    pub m: f64,
    pub re: f64,
    pub dt: f64,
    pub n: usize,
    pub exit_code: i32,
    pub t_num: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub max_identity_residual: Option<f64>,
    /// Observed temporal order from this `Δt` and the next two halvings.
    pub order: Option<f64>,
    pub error: Option<String>,
    pub dir: PathBuf,
}

fn or_base<T: Copy>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

fn base_re(cfg: &RunConfig) -> f64 {
    match cfg.equation.a {
        CoefficientConfig::Explicit { re, .. } | CoefficientConfig::Ray { re } => re,
    }
}

fn point_config(base: &RunConfig, m: f64, re: Option<f64>, dt: f64, n: usize, dir: &Path) -> RunConfig {
    let mut cfg = base.clone();
    cfg.equation.m = m;
    if let Some(re) = re {
        cfg.equation.a = CoefficientConfig::Ray { re };
    }
    let horizon = base.time.dt * base.time.steps as f64;
    cfg.time.dt = dt;
    cfg.time.steps = (horizon / dt).round() as usize;
    cfg.grid.counts = vec![n; base.grid.counts.len()];
    cfg.output.dir = dir.to_path_buf();
    cfg.name = format!("{}-{}", base.name, dir.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned()));
    cfg
}

/// Reparses the emitted point configuration so that invalid combinations
/// (for instance `m` outside `(0,1)`) are caught exactly as in a config file.
fn validate(cfg: &RunConfig) -> Result<RunConfig, ConfigError> {
    super::parse_config(&cfg.emit())
}

/// Runs every point in parallel, each writing to `out/point_XXX`, then writes `out/sweep.csv`.
pub fn run_sweep(base: &RunConfig, spec: &SweepSpec, out: &Path) -> std::io::Result<Vec<SweepPoint>> {
    let ms = or_base(&spec.m, base.equation.m);
    let res: Vec<Option<f64>> = if spec.re.is_empty() { vec![None] } else { spec.re.iter().map(|r| Some(*r)).collect() };
    let dts = or_base(&spec.dt, base.time.dt);
    let ns = or_base(&spec.n, base.grid.counts[0]);
    let mut combos = Vec::new();
    for &m in &ms {
        for &re in &res {
            for &n in &ns {
                for &dt in &dts {
                    combos.push((m, re, n, dt));
                }
            }
        }
    }
    fs::create_dir_all(out)?;
    let results: Vec<(SweepPoint, Option<Field>)> = combos
        .par_iter()
        .enumerate()
        .map(|(i, &(m, re, n, dt))| {
            let dir = out.join(format!("point_{i:03}"));
            let cfg = point_config(base, m, re, dt, n, &dir);
            let mut point = SweepPoint {
                point: i,
                m,
                re: re.unwrap_or_else(|| base_re(base)),
                dt,
                n,
                exit_code: ExitStatus::ConfigError.code(),
                t_num: None,
                fitted_rate: None,
                max_identity_residual: None,
                order: None,
                error: None,
                dir: dir.clone(),
            };
            let outcome = validate(&cfg).map_err(super::HarnessError::from).and_then(|cfg| {
                let o = execute(&cfg)?;
                write_outputs(&cfg, &o)?;
                Ok(o)
            });
            match outcome {
                Ok(o) => {
                    let r = &o.report;
                    point.exit_code = r.exit_code;
                    point.t_num = r.extinction.as_ref().and_then(|e| e.t_num);
                    point.fitted_rate = r.extinction.as_ref().and_then(|e| e.fit.map(|f| f.rate_or_exponent));
                    point.max_identity_residual = Some(r.max_identity_residual);
                    point.error = r.failure.clone();
                    let complete = r.failure.is_none();
                    (point, complete.then_some(o.trajectory.final_state))
                }
                Err(e) => {
                    point.exit_code = e.exit_status().code();
                    point.error = Some(e.to_string());
                    (point, None)
                }
            }
        })
        .collect();

    let mut points: Vec<SweepPoint> = results.iter().map(|(p, _)| p.clone()).collect();
    // consecutive Δt halvings at fixed (m, re, n)
    for i in 0..results.len() {
        let (p0, f0) = &results[i];
        let next = |dt: f64| results.iter().find(|(p, _)| p.m == p0.m && p.re == p0.re && p.n == p0.n && (p.dt - dt).abs() <= 1e-12 * dt);
        let (Some((_, Some(f1))), Some((_, Some(f2)))) = (next(p0.dt / 2.0), next(p0.dt / 4.0)) else { continue };
        let Some(f0) = f0 else { continue };
        let d01 = f0.sub(f1).map(|d| d.l2());
        let d12 = f1.sub(f2).map(|d| d.l2());
        if let (Ok(a), Ok(b)) = (d01, d12) {
            if a > 0.0 && b > 0.0 {
                points[i].order = Some((a / b).log2());
            }
        }
    }
    fs::write(out.join("sweep.csv"), sweep_csv(&points))?;
    Ok(points)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{},{},{},{},{},{}",
            p.point,
            p.m,
            p.re,
            p.dt,
            p.n,
            p.exit_code,
            opt(p.t_num),
            opt(p.fitted_rate),
            opt(p.max_identity_residual),
            opt(p.order)
        );
    }
    s
}
