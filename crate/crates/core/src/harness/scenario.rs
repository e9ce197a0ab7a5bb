//! One configured run: integrate, evaluate the requested checks, write outputs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff::{eps_star, Classification, smallness_check, Exponent, SmallnessInputs, SmallnessReport};
use crate::evolve::{self, contraction_check, h1_monitor, RunSetup, Scheme, SolverStats, Trajectory};
use crate::extinct::{
    bound_report, decay_fit, gn_constant_estimate, theoretical_exponent, vanishing_monitor, write_envelope_csv, BoundInputs,
    BoundReport, DecayFit, DecayKind, ExtinctionReport, FitOptions, SCHEMA_VERSION,
};

use super::build::{build_partner, build_setup};
use super::config::{CheckKind, ConfigError, RunConfig, SnapshotFormat};
use super::{ExitStatus, HarnessError};

/// Minimum `r²` for an exponential fit to count as exponential decay.
pub const EXPONENTIAL_R2: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check does not apply to this configuration and does not affect the exit code.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(check: CheckKind, pass: bool, value: Option<f64>, limit: Option<f64>, detail: impl Into<String>) -> Self {
        let status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
        CheckOutcome { check, status, value, limit, detail: detail.into() }
    }

    fn skipped(check: CheckKind, detail: impl Into<String>) -> Self {
        CheckOutcome { check, status: CheckStatus::Skipped, value: None, limit: None, detail: detail.into() }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }

    /// One-line rendering: `PASS name  detail [value vs limit]`.
    pub fn line(&self) -> String {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let mut s = format!("{tag} {:<18} {}", self.check.name(), self.detail);
        if let (Some(v), Some(l)) = (self.value, self.limit) {
            s.push_str(&format!(" [{v:.4e} vs {l:.4e}]"));
        }
        s
    }
}

/// Machine-readable summary written as `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub grid: String,
    pub m: f64,
    pub a: [f64; 2],
    pub classification: Classification,
    pub eps: f64,
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub steps_completed: usize,
    pub final_time: f64,
    pub failure: Option<String>,
    pub stats: SolverStats,
    pub max_identity_residual: f64,
    pub extinction: Option<ExtinctionReport>,
    pub smallness: Option<SmallnessReport>,
    pub checks: Vec<CheckOutcome>,
    pub exit_code: i32,
}

impl RunReport {
    pub fn exit_status(&self) -> ExitStatus {
        match self.exit_code {
            0 => ExitStatus::Ok,
            1 => ExitStatus::ConfigError,
            2 => ExitStatus::SolverFailure,
            _ => ExitStatus::CheckFailure,
        }
    }

    pub fn check(&self, kind: CheckKind) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.check == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report contains only plain data")
    }
}

/// Result of [`execute`]: the report plus the in-memory trajectories.
#[derive(Debug)]
pub struct Outcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub partner: Option<Trajectory>,
    pub bounds: Option<BoundReport>,
}

/// Start of the forcing-free regime used by the bound and decay checks.
fn regime_start(cfg: &RunConfig, setup: &RunSetup) -> Option<f64> {
    cfg.checks.t0.or_else(|| setup.forcing.cutoff())
}

/// `[T0, first time the mass has dropped by the configured decades]`.
fn decay_window(traj: &Trajectory, t0: f64, decades: f64) -> Option<[f64; 2]> {
    let entries = &traj.ledger.entries;
    let start = entries.iter().find(|e| e.t >= t0 - 1e-12)?;
    let target = start.mass * 10f64.powf(-decades);
    let end = entries.iter().find(|e| e.t >= start.t && e.mass <= target).map_or(traj.final_time(), |e| e.t);
    Some([start.t, end])
}

/// Time scale `2 α_ℓ (δ-1) y0^{δ-1}` of the envelope, the natural `c` for algebraic fits.
pub fn envelope_time_scale(b: &BoundReport) -> Option<f64> {
    (b.delta > 1.0).then(|| 2.0 * b.alpha_ell * (b.delta - 1.0) * b.envelope.y0.powf(b.delta - 1.0))
}

fn fit_for(
    traj: &Trajectory,
    kind: DecayKind,
    cfg: &RunConfig,
    t0: f64,
    bounds: Option<&BoundReport>,
) -> crate::Result<DecayFit> {
    let window = decay_window(traj, t0, cfg.checks.decades)
        .ok_or_else(|| crate::Error::InsufficientData(format!("ledger ends before T0 = {t0}")))?;
    let dim = traj.setup.grid().dim();
    let opts = match kind {
        DecayKind::Exponential => FitOptions { t0, scale: None, theoretical: None },
        DecayKind::Algebraic => FitOptions {
            t0: window[0],
            scale: bounds.and_then(envelope_time_scale),
            theoretical: theoretical_exponent(dim, cfg.equation.m, 1),
        },
    };
    decay_fit(&traj.ledger, kind, window, &opts)
}

fn smallness(cfg: &RunConfig, traj: &Trajectory, t0: f64) -> crate::Result<SmallnessReport> {
    let setup = &traj.setup;
    let grid = setup.grid().clone();
    let dim = grid.dim();
    let m = Exponent::new(cfg.equation.m)?;
    let delta = crate::coeff::delta(dim, 1, m)?;
    let c_gn = gn_constant_estimate(&traj.ledger, dim, cfg.equation.m, 1)?.c_gn;
    let alpha = setup.params.a.im() / c_gn;
    let eps_star = eps_star(alpha, delta)?;
    let dt = setup.time.dt();
    let sample_times: Vec<f64> = (0..=setup.time.steps()).map(|k| setup.time.time(k)).filter(|t| *t <= t0).collect();
    let grad: Vec<f64> = sample_times.iter().map(|&t| setup.forcing.sample(&grid, t).h1_seminorm()).collect();
    let forcing_budget = grad.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum();
    let forcing_l2 = |t: f64| setup.forcing.sample(&grid, t).l2();
    Ok(smallness_check(&SmallnessInputs {
        u0_l2: setup.u0.l2(),
        data_norm: setup.u0.h1_seminorm(),
        forcing_budget,
        forcing_l2: &forcing_l2,
        sample_times: &sample_times,
        t0,
        eps_star,
        delta,
    }))
}

fn evaluate(
    cfg: &RunConfig,
    traj: &Trajectory,
    partner: Option<&Trajectory>,
    bounds: Option<&BoundReport>,
    t0: Option<f64>,
    small: &mut Option<SmallnessReport>,
) -> Vec<CheckOutcome> {
    let checks = &cfg.checks;
    let threshold = checks.threshold;
    let t_num = crate::extinct::detect_extinction(&traj.ledger, threshold);
    let no_bounds = |k| CheckOutcome::skipped(k, "bounds unavailable: no forcing cutoff or `checks.t0`, or the ledger ends before it");
    checks
        .list
        .iter()
        .map(|&kind| match kind {
            CheckKind::MassIdentity => {
                let limit = 10.0 * cfg.solver.tol;
                let value = traj.ledger.max_identity_residual();
                if traj.setup.scheme == Scheme::CrankNicolson {
                    CheckOutcome::skipped(kind, format!("residual {value:e} is diagnostic for crank_nicolson"))
                } else {
                    CheckOutcome::new(kind, value <= limit, Some(value), Some(limit), "max identity residual")
                }
            }
            CheckKind::Apriori => {
                let v = traj.stats.apriori_violations;
                CheckOutcome::new(kind, v == 0, Some(v as f64), Some(0.0), format!("{v} steps violated ‖u‖ ≤ ‖F‖"))
            }
            CheckKind::Extinction => match t_num {
                Some(t) => CheckOutcome::new(kind, true, Some(t), None, format!("mass ≤ {threshold:e} from t = {t}")),
                None => CheckOutcome::new(kind, false, None, None, format!("mass stays above {threshold:e}")),
            },
            CheckKind::LowerBound => match (bounds, t_num) {
                (Some(b), Some(t)) => CheckOutcome::new(kind, b.lower_ok, Some(t), Some(b.lower_bound), "T_num vs lower bound"),
                (Some(_), None) => CheckOutcome::new(kind, false, None, None, "no extinction observed"),
                (None, _) => no_bounds(kind),
            },
            CheckKind::UpperBound => match bounds {
                Some(b) => CheckOutcome::new(
                    kind,
                    b.upper_ok == Some(true),
                    b.t_num,
                    b.upper_envelope_time,
                    "T_num vs envelope extinction time",
                ),
                None => no_bounds(kind),
            },
            CheckKind::Envelope => match bounds {
                Some(b) => CheckOutcome::new(
                    kind,
                    b.envelope_check.ok,
                    Some(b.envelope_check.worst_ratio),
                    Some(1.0 + checks.slack),
                    format!("worst mass/envelope ratio at t = {}", b.envelope_check.worst_t),
                ),
                None => no_bounds(kind),
            },
            CheckKind::Floor => match bounds {
                Some(b) => CheckOutcome::new(
                    kind,
                    b.floor_check.ok,
                    Some(b.floor_check.worst_ratio),
                    Some(1.0 / (1.0 - checks.slack)),
                    format!("worst floor/mass ratio at t = {}", b.floor_check.worst_t),
                ),
                None => no_bounds(kind),
            },
            CheckKind::ExponentialDecay => match t0.map(|t0| fit_for(traj, DecayKind::Exponential, cfg, t0, bounds)) {
                Some(Ok(f)) => CheckOutcome::new(
                    kind,
                    f.r2 >= EXPONENTIAL_R2 && f.rate_or_exponent > 0.0,
                    Some(f.r2),
                    Some(EXPONENTIAL_R2),
                    format!("rate {} over [{}, {}]", f.rate_or_exponent, f.window[0], f.window[1]),
                ),
                Some(Err(e)) => CheckOutcome::new(kind, false, None, None, e.to_string()),
                None => no_bounds(kind),
            },
            CheckKind::AlgebraicDecay => {
                let Some(p_th) = theoretical_exponent(traj.setup.grid().dim(), cfg.equation.m, 1) else {
                    return CheckOutcome::skipped(kind, "no algebraic exponent for this dimension");
                };
                match t0.map(|t0| fit_for(traj, DecayKind::Algebraic, cfg, t0, bounds)) {
                    Some(Ok(f)) => CheckOutcome::new(
                        kind,
                        (f.rate_or_exponent - p_th).abs() <= checks.fit_slack * p_th,
                        Some(f.rate_or_exponent),
                        Some(p_th),
                        format!(
                            "r² {} with c = {:?} over [{}, {}]",
                            f.r2, f.scale, f.window[0], f.window[1]
                        ),
                    ),
                    Some(Err(e)) => CheckOutcome::new(kind, false, None, Some(p_th), e.to_string()),
                    None => no_bounds(kind),
                }
            }
            CheckKind::Contraction => match partner.map(|p| contraction_check(traj, p)) {
                Some(Ok(r)) => CheckOutcome::new(
                    kind,
                    r.pass,
                    Some(r.max_violation),
                    Some(r.slack),
                    format!("distance {} → {}, forcing budget {}", r.initial_distance, r.final_distance, r.forcing_budget),
                ),
                Some(Err(e)) => CheckOutcome::new(kind, false, None, None, e.to_string()),
                None => CheckOutcome::new(kind, false, None, None, "partner run unavailable"),
            },
            CheckKind::H1Monitor => {
                let r = h1_monitor(traj, checks.h1_tolerance);
                if r.applicable {
                    let mono = r.nonincreasing_after_cutoff.unwrap_or(true);
                    CheckOutcome::new(
                        kind,
                        r.pass && mono,
                        Some(r.max_ratio),
                        Some(1.0 + r.tolerance),
                        format!("gradient nonincreasing after cutoff: {mono}"),
                    )
                } else {
                    CheckOutcome::skipped(kind, "potential is not constant")
                }
            }
            CheckKind::Vanishing => {
                let r = vanishing_monitor(traj, &[2.0, cfg.equation.m + 1.0]);
                if r.conclusive {
                    let flat: Vec<&str> = r.trends.iter().filter(|t| !t.decreasing).map(|t| t.name.as_str()).collect();
                    CheckOutcome::new(kind, r.pass, None, None, format!("non-decreasing tails: {flat:?}"))
                } else {
                    CheckOutcome::skipped(kind, "forcing still active at the horizon")
                }
            }
            CheckKind::Smallness => {
                let Some(t0) = t0 else { return no_bounds(kind) };
                match smallness(cfg, traj, t0) {
                    Ok(r) => {
                        let deadline = t0 * (1.0 + checks.slack);
                        let extinct = t_num.is_some_and(|t| t <= deadline);
                        let out = CheckOutcome::new(
                            kind,
                            r.passed() && extinct,
                            t_num,
                            Some(deadline),
                            format!("conditions hold: {}, extinct by deadline: {extinct}", r.passed()),
                        );
                        *small = Some(r);
                        out
                    }
                    Err(e) => CheckOutcome::new(kind, false, None, None, e.to_string()),
                }
            }
        })
        .collect()
}

/// Builds and integrates the configured run (and its partner), then evaluates the checks.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, HarnessError> {
    let mut setup = build_setup(cfg)?;
    let wants_contraction = cfg.checks.list.contains(&CheckKind::Contraction);
    let mut partner_setup = build_partner(cfg, &setup)?;
    if wants_contraction {
        let p = partner_setup.as_mut().ok_or_else(|| ConfigError::BadValue {
            key: "checks.list".into(),
            reason: "contraction needs a [partner] section".into(),
        })?;
        setup.snapshot_stride = 1;
        p.snapshot_stride = 1;
    }
    let (main, partner) = rayon::join(|| evolve::run(&setup), || partner_setup.as_ref().map(evolve::run));
    let (trajectory, failure) = match main {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let (partner, partner_failure) = match partner {
        Some(Ok(t)) => (Some(t), None),
        Some(Err(f)) => (Some(f.partial), Some(f.error)),
        None => (None, None),
    };
    let failure = failure.or(partner_failure.map(|e| crate::Error::Incompatible(format!("partner run: {e}"))));

    let grid = setup.grid().clone();
    let t0 = regime_start(cfg, &setup);
    let bounds = t0.and_then(|t0| {
        let c_gn = gn_constant_estimate(&trajectory.ledger, grid.dim(), cfg.equation.m, 1).ok()?.c_gn;
        let inp = BoundInputs {
            dim: grid.dim(),
            m: cfg.equation.m,
            im_a: setup.params.a.im(),
            volume: grid.volume(),
            ell: 1,
            t0,
            slack: cfg.checks.slack,
            threshold: cfg.checks.threshold,
        };
        bound_report(&trajectory.ledger, &inp, c_gn).ok()
    });

    let mut small = None;
    let checks = if failure.is_some() {
        Vec::new()
    } else {
        evaluate(cfg, &trajectory, partner.as_ref(), bounds.as_ref(), t0, &mut small)
    };
    let exit = if failure.is_some() {
        ExitStatus::SolverFailure
    } else if checks.iter().any(CheckOutcome::failed) {
        ExitStatus::CheckFailure
    } else {
        ExitStatus::Ok
    };
    let fit = t0.and_then(|t0| {
        let kind = if theoretical_exponent(grid.dim(), cfg.equation.m, 1).is_some() && cfg.checks.list.contains(&CheckKind::AlgebraicDecay) {
            DecayKind::Algebraic
        } else {
            DecayKind::Exponential
        };
        fit_for(&trajectory, kind, cfg, t0, bounds.as_ref()).ok()
    });
    let vanishing = cfg.checks.list.contains(&CheckKind::Vanishing).then(|| vanishing_monitor(&trajectory, &[2.0, cfg.equation.m + 1.0]));
    let extinction = bounds.clone().map(|b| ExtinctionReport::from_bounds(b, fit, vanishing));
    let a = setup.params.a();
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        grid: crate::grid::describe(&grid),
        m: cfg.equation.m,
        a: [a.re, a.im],
        classification: cfg.equation.classification(),
        eps: cfg.equation.eps,
        dt: cfg.time.dt,
        steps: cfg.time.steps,
        scheme: cfg.time.scheme,
        steps_completed: trajectory.steps_completed,
        final_time: trajectory.final_time(),
        failure: failure.map(|e| e.to_string()),
        stats: trajectory.stats,
        max_identity_residual: trajectory.ledger.max_identity_residual(),
        extinction,
        smallness: small,
        checks,
        exit_code: exit.code(),
    };
    Ok(Outcome { report, trajectory, partner, bounds })
}

fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run {} on {}", report.name, report.grid);
    let _ = writeln!(
        s,
        "m = {}, a = {} + {}i ({:?}), eps = {:e}",
        report.m, report.a[0], report.a[1], report.classification, report.eps
    );
    let _ = writeln!(s, "dt = {:e}, steps {}/{}, final t = {}", report.dt, report.steps_completed, report.steps, report.final_time);
    let _ = writeln!(s, "max identity residual {:e}", report.max_identity_residual);
    if let Some(e) = &report.extinction {
        let _ = writeln!(
            s,
            "T_num {:?}, lower bound {}, envelope time {:?}",
            e.t_num, e.lower_bound, e.upper_envelope_time
        );
    }
    if let Some(f) = &report.failure {
        let _ = writeln!(s, "FAILURE: {f}");
    }
    for c in &report.checks {
        let _ = writeln!(s, "{}", c.line());
    }
    let _ = writeln!(s, "exit code {}", report.exit_code);
    s
}

fn write_snapshots(dir: &Path, traj: &Trajectory, format: SnapshotFormat, stride: usize) -> std::io::Result<()> {
    let dir = dir.join("snapshots");
    fs::create_dir_all(&dir)?;
    let last = traj.steps_completed;
    for snap in &traj.snapshots {
        let keep = snap.step == 0 || snap.step == last || (stride > 0 && snap.step % stride == 0);
        if !keep {
            continue;
        }
        let path = dir.join(format!("step_{:07}.{}", snap.step, format.extension()));
        let w = BufWriter::new(File::create(path)?);
        let written = match format {
            SnapshotFormat::Csv => snap.state.write_csv(w),
            SnapshotFormat::Binary => snap.state.write_binary(w),
        };
        written.map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(())
}

/// Writes `ledger.csv`, `report.json`, `summary.txt`, `envelope.csv` (when bounds exist) and snapshots.
pub fn write_outputs(cfg: &RunConfig, out: &Outcome) -> std::io::Result<()> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let io = |e: crate::Error| std::io::Error::other(e.to_string());
    out.trajectory.ledger.write_csv(BufWriter::new(File::create(dir.join("ledger.csv"))?)).map_err(io)?;
    if let Some(p) = &out.partner {
        p.ledger.write_csv(BufWriter::new(File::create(dir.join("partner_ledger.csv"))?)).map_err(io)?;
    }
    if let Some(b) = &out.bounds {
        write_envelope_csv(BufWriter::new(File::create(dir.join("envelope.csv"))?), &out.trajectory.ledger, &b.envelope, &b.floor)
            .map_err(io)?;
    }
    write_snapshots(dir, &out.trajectory, cfg.output.snapshot_format, cfg.output.snapshot_stride)?;
    fs::write(dir.join("report.json"), out.report.to_json())?;
    fs::write(dir.join("summary.txt"), summary(&out.report))?;
    fs::write(dir.join("config.toml"), cfg.emit())?;
    Ok(())
}

/// [`execute`] followed by [`write_outputs`].
pub fn run_scenario(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    let out = execute(cfg)?;
    write_outputs(cfg, &out)?;
    Ok(out.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn small_config(dir: &Path, extra: &str) -> RunConfig {
        let text = format!(
            "name = \"t\"\n[grid]\nlengths = [1.0]\ncounts = [24]\n[equation]\nm = 0.5\nray_re = 1.0\n\
             [initial]\nkind = \"sine\"\namplitude = 1.0\n[time]\ndt = 0.002\nsteps = 50\n\
             [output]\ndir = {:?}\nsnapshot_stride = 10\n{extra}",
            dir.to_string_lossy()
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn writes_all_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "[checks]\nlist = [\"mass_identity\", \"apriori\", \"envelope\"]\n");
        let report = run_scenario(&cfg).unwrap();
        assert_eq!(report.exit_code, 0, "{}", report.to_json());
        for f in ["ledger.csv", "report.json", "summary.txt", "envelope.csv", "config.toml"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let snaps = fs::read_dir(dir.path().join("snapshots")).unwrap().count();
        assert_eq!(snaps, 6);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        let ledger = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
        assert!(ledger.starts_with("t,mass,absorption,lmp1,work,step_defect,identity_residual,h1,lapl2"));
        let env = fs::read_to_string(dir.path().join("envelope.csv")).unwrap();
        assert!(env.starts_with("t,y_env,y_floor,y_ledger"));
    }

    #[test]
    fn failing_check_sets_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "[checks]\nlist = [\"extinction\"]\n");
        let out = execute(&cfg).unwrap();
        assert_eq!(out.report.exit_status(), ExitStatus::CheckFailure);
        assert!(out.report.check(CheckKind::Extinction).unwrap().failed());
    }

    #[test]
    fn solver_failure_sets_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "[solver]\ntol = 1e-300\nmax_iter = 3\n");
        let report = run_scenario(&cfg).unwrap();
        assert_eq!(report.exit_status(), ExitStatus::SolverFailure);
        assert!(report.failure.is_some());
        assert!(dir.path().join("ledger.csv").exists());
    }

    #[test]
    fn contraction_without_partner_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "[checks]\nlist = [\"contraction\"]\n");
        assert!(matches!(execute(&cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn runs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let text = "[initial]\nkind = \"random\"\namplitude = 0.5\n";
        let mut cfg = small_config(dir.path(), "");
        cfg.seed = 11;
        cfg.initial = parse_config(&format!(
            "[grid]\nlengths = [1.0]\ncounts = [4]\n[equation]\nm = 0.5\nray_re = 1.0\n[time]\ndt = 1.0\nsteps = 1\n{text}"
        ))
        .unwrap()
        .initial;
        let a = execute(&cfg).unwrap();
        let b = execute(&cfg).unwrap();
        assert_eq!(a.trajectory.ledger, b.trajectory.ledger);
        assert_eq!(a.trajectory.final_state.values(), b.trajectory.final_state.values());
    }
}
