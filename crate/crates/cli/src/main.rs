use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dnls_core::coeff::{classify, make_dm_coefficient, Classification};
use dnls_core::extinct::{bound_report, gn_constant_estimate, write_envelope_csv, BoundInputs, EnvelopeParams};
use dnls_core::harness::config::{ForcingConfig, RunConfig};
use dnls_core::harness::{presets, run_scenario, run_sweep, ExitStatus, SweepSpec};
use dnls_core::{Complex64, Exponent, MassLedger};

#[derive(Parser)]
#[command(name = "dnls", version, about = "Damped sublinear Schrödinger laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and evaluate its checks.
    Run(RunArgs),
    /// Run a base configuration over a grid of parameters.
    Sweep(SweepArgs),
    /// List the built-in configurations, or print one as TOML.
    Presets {
        /// Print this preset's configuration.
        #[arg(long)]
        show: Option<String>,
    },
    /// Classify a damping coefficient for a given exponent.
    CheckCoefficient(CoefficientArgs),
    /// Recompute envelope and floor from a ledger CSV.
    Envelope(EnvelopeArgs),
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in configuration instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<RunConfig, String> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_path(path).map_err(|e| format!("{}: {e}", path.display())),
            (None, Some(name)) => presets::find(name)
                .map(|p| p.config())
                .ok_or_else(|| format!("unknown preset {name:?}; see `dnls presets`")),
            (None, None) => Err("give a configuration file or --preset".into()),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',')]
    m: Vec<f64>,
    /// Real parts of `a`; each places the coefficient on the critical ray.
    #[arg(long, value_delimiter = ',')]
    re: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    dt: Vec<f64>,
    /// Nodes per axis.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

#[derive(Args)]
struct CoefficientArgs {
    #[arg(long)]
    m: f64,
    #[arg(long)]
    re: f64,
    /// Imaginary part; omit to use the critical ray.
    #[arg(long)]
    im: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EnvelopeArgs {
    /// Ledger CSV written by `dnls run`; omit to use the closed-form calculator.
    #[arg(requires = "config", conflicts_with_all = ["y0", "alpha", "delta"])]
    ledger: Option<PathBuf>,
    /// Configuration of the run that produced the ledger.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start of the forcing-free regime (default: forcing cutoff, else 0).
    #[arg(long)]
    t0: Option<f64>,
    /// Use this constant instead of estimating it from the ledger.
    #[arg(long)]
    c_gn: Option<f64>,
    /// Calculator: mass at `t0`.
    #[arg(long, requires_all = ["alpha", "delta"])]
    y0: Option<f64>,
    /// Calculator: rate `α` in `y' = -2α y^δ`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Calculator: exponent `δ > 1/2`.
    #[arg(long)]
    delta: Option<f64>,
    /// Calculator: derivative order attached to the envelope.
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Calculator: sample the curve on `[t0, until]` (default: twice the extinction time, or 10).
    #[arg(long)]
    until: Option<f64>,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(status: ExitStatus, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(status.code() as u8)
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match args.source.load() {
        Ok(c) => c,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    let cfg = match args.out {
        Some(dir) => cfg.with_output_dir(dir),
        None => cfg,
    };
    let report = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(e.exit_status(), e),
    };
    if args.json {
        println!("{}", report.to_json());
    } else {
        println!("{} → {}", report.name, cfg.output.dir.display());
        println!("a = {} + {}i: {:?}", report.a[0], report.a[1], report.classification);
        if let Some(f) = &report.failure {
            println!("solver failure: {f}");
        }
        for c in &report.checks {
            println!("{}", c.line());
        }
    }
    ExitCode::from(report.exit_code as u8)
}

/// Worst point status: config error, then solver failure, then check failure.
fn sweep_status(codes: impl Iterator<Item = i32>) -> ExitStatus {
    let codes: Vec<i32> = codes.collect();
    [ExitStatus::ConfigError, ExitStatus::SolverFailure, ExitStatus::CheckFailure]
        .into_iter()
        .find(|s| codes.contains(&s.code()))
        .unwrap_or(ExitStatus::Ok)
}

fn sweep(args: SweepArgs) -> ExitCode {
    let base = match args.source.load() {
        Ok(c) => c,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    let spec = SweepSpec { m: args.m, re: args.re, dt: args.dt, n: args.n };
    let points = match run_sweep(&base, &spec, &args.out) {
        Ok(p) => p,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    for p in &points {
        let note = p.error.as_deref().unwrap_or("");
        println!("point {:>3} m={} re={} dt={:e} n={} exit={} {note}", p.point, p.m, p.re, p.dt, p.n, p.exit_code);
    }
    println!("wrote {}", args.out.join("sweep.csv").display());
    ExitCode::from(sweep_status(points.iter().map(|p| p.exit_code)).code() as u8)
}

fn list_presets(show: Option<String>) -> ExitCode {
    match show {
        Some(name) => match presets::find(&name) {
            Some(p) => {
                print!("{}", p.config().emit());
                ExitCode::SUCCESS
            }
            None => fail(ExitStatus::ConfigError, format!("unknown preset {name:?}")),
        },
        None => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.description);
            }
            ExitCode::SUCCESS
        }
    }
}

fn check_coefficient(args: CoefficientArgs) -> ExitCode {
    let m = match Exponent::new(args.m) {
        Ok(m) => m,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    let a = match args.im {
        Some(im) => Complex64::new(args.re, im),
        None => match make_dm_coefficient(m, args.re) {
            Ok(a) => a,
            Err(e) => return fail(ExitStatus::ConfigError, e),
        },
    };
    let class = classify(a, m);
    let name = match class {
        Classification::InD => "D(m)",
        Classification::InCOnly => "C(m) interior",
        Classification::Outside => "outside C(m)",
    };
    let ray_im = m.ray_slope() * a.re.abs();
    if args.json {
        let v = serde_json::json!({
            "m": args.m,
            "a": [a.re, a.im],
            "classification": format!("{class:?}"),
            "in_cone": class.in_cone(),
            "critical_im": ray_im,
        });
        println!("{v}");
    } else {
        println!("a = {} + {}i, m = {}: {name} (critical Im(a) = {ray_im})", a.re, a.im, args.m);
    }
    if class.in_cone() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(ExitStatus::CheckFailure.code() as u8)
    }
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn envelope_calculator(args: &EnvelopeArgs, y0: f64, alpha: f64, delta: f64) -> ExitCode {
    let t0 = args.t0.unwrap_or(0.0);
    let env = match EnvelopeParams::new(y0, alpha, delta, t0, args.ell) {
        Ok(e) => e,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    let t_ext = env.extinction_time();
    let until = args.until.unwrap_or_else(|| t_ext.map_or(t0 + 10.0, |t| t0 + 2.0 * (t - t0)));
    let n = args.points.max(2);
    let written = output(&args.out).and_then(|mut w| {
        writeln!(w, "t,y_env,y_floor,y_ledger")?;
        for k in 0..n {
            let t = t0 + (until - t0) * k as f64 / (n - 1) as f64;
            writeln!(w, "{t:e},{:e},,", env.value(t))?;
        }
        w.flush()
    });
    if let Err(e) = written {
        return fail(ExitStatus::ConfigError, e);
    }
    match t_ext {
        Some(t) => eprintln!("extinction time {t}"),
        None => eprintln!("no finite extinction time (delta = {delta})"),
    }
    ExitCode::SUCCESS
}

fn envelope(args: EnvelopeArgs) -> ExitCode {
    let (Some(ledger_path), Some(config)) = (&args.ledger, &args.config) else {
        return match (args.y0, args.alpha, args.delta) {
            (Some(y0), Some(alpha), Some(delta)) => envelope_calculator(&args, y0, alpha, delta),
            _ => fail(ExitStatus::ConfigError, "give a ledger and --config, or --y0 --alpha --delta"),
        };
    };
    let cfg = match RunConfig::from_path(config) {
        Ok(c) => c,
        Err(e) => return fail(ExitStatus::ConfigError, format!("{}: {e}", config.display())),
    };
    let ledger = match File::open(ledger_path).map_err(dnls_core::Error::from).and_then(|f| MassLedger::read_csv(BufReader::new(f))) {
        Ok(l) => l,
        Err(e) => return fail(ExitStatus::ConfigError, format!("{}: {e}", ledger_path.display())),
    };
    let grid = match cfg.grid.spec() {
        Ok(g) => g,
        Err(e) => return fail(ExitStatus::ConfigError, e),
    };
    let cutoff = match &cfg.forcing {
        ForcingConfig::Zero => Some(0.0),
        ForcingConfig::Windowed { cutoff, .. } => *cutoff,
        ForcingConfig::File { .. } => None,
    };
    let t0 = args.t0.or(cfg.checks.t0).or(cutoff).unwrap_or(0.0);
    let c_gn = match args.c_gn {
        Some(c) => c,
        None => match gn_constant_estimate(&ledger, grid.dim(), cfg.equation.m, 1) {
            Ok(e) => e.c_gn,
            Err(e) => return fail(ExitStatus::CheckFailure, e),
        },
    };
    let inp = BoundInputs {
        dim: grid.dim(),
        m: cfg.equation.m,
        im_a: cfg.equation.coefficient().im,
        volume: grid.volume(),
        ell: 1,
        t0,
        slack: cfg.checks.slack,
        threshold: cfg.checks.threshold,
    };
    let b = match bound_report(&ledger, &inp, c_gn) {
        Ok(b) => b,
        Err(e) => return fail(ExitStatus::CheckFailure, e),
    };
    let written = output(&args.out)
        .map_err(dnls_core::Error::from)
        .and_then(|w| write_envelope_csv(w, &ledger, &b.envelope, &b.floor));
    if let Err(e) = written {
        return fail(ExitStatus::ConfigError, e);
    }
    eprintln!(
        "C_GN {:.6e}, delta {:.6}, T_num {:?}, lower bound {:.6}, envelope time {:?}",
        b.c_gn, b.delta, b.t_num, b.lower_bound, b.upper_envelope_time
    );
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ExitStatus::ConfigError.code() as u8);
        }
    };
    match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Presets { show } => list_presets(show),
        Command::CheckCoefficient(a) => check_coefficient(a),
        Command::Envelope(a) => envelope(a),
    }
}
