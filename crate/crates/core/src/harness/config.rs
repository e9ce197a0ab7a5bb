//! `RunConfig`: the TOML run description, its validation and re-emission.
//!
//! Parsing walks a `toml::Table` by hand so that every failure names the
//! offending key path (`time.dt`, `initial.width`, …) and unknown keys are
//! rejected instead of silently ignored. See `docs/config.md` for the schema.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::coeff::{classify, make_dm_coefficient, Classification, Exponent};
use crate::evolve::{ForcingClass, Scheme, Temporal};
use crate::grid::GridSpec;
use crate::stationary::{MethodChoice, SolverOptions};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error(
        "coefficient a = {re} + {im}i is outside C(m) for m = {m}: need Im(a) > 0 and \
         2√m Im(a) ≥ (1-m)|Re(a)| (here {lhs:.6e} < {rhs:.6e})"
    )]
    CoefficientOutsideC { re: f64, im: f64, m: f64, lhs: f64, rhs: f64 },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed TOML: {0}")]
    Syntax(String),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub lengths: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridConfig {
    pub fn spec(&self) -> crate::Result<GridSpec> {
        GridSpec::new(&self.lengths, &self.counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoefficientConfig {
    /// `a = re + i im`.
    Explicit { re: f64, im: f64 },
    /// The point of the critical ray with the given real part.
    Ray { re: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquationConfig {
    pub m: f64,
    pub a: CoefficientConfig,
    pub eps: f64,
}

impl EquationConfig {
    pub fn exponent(&self) -> Exponent {
        Exponent::new(self.m).expect("validated at parse time")
    }

    pub fn coefficient(&self) -> Complex64 {
        match self.a {
            CoefficientConfig::Explicit { re, im } => Complex64::new(re, im),
            CoefficientConfig::Ray { re } => make_dm_coefficient(self.exponent(), re).expect("validated at parse time"),
        }
    }

    pub fn classification(&self) -> Classification {
        classify(self.coefficient(), self.exponent())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PotentialConfig {
    Zero,
    Constant { value: f64 },
    /// `V = -ω² |x - c|²`, a confining well in the sign convention of the equation.
    Harmonic { omega: f64, center: Option<Vec<f64>> },
    /// Seeded bounded noise plus the tail `tail_amplitude |x - c|^{-tail_exponent}`.
    Random { amplitude: f64, tail_amplitude: f64, tail_exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotFormat {
    Csv,
    Binary,
}

impl SnapshotFormat {
    fn name(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Binary => "binary",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialConfig {
    Zero,
    Gaussian { amplitude: f64, width: f64, center: Option<Vec<f64>>, wavevector: Option<Vec<f64>> },
    /// `amplitude Π sin(k_j π x_j / L_j)`.
    Sine { amplitude: f64, modes: Vec<usize> },
    /// Seeded sine series over the first `modes` modes per axis with `1/|k|²` decay, scaled to `‖u0‖₂ = amplitude`.
    Random { amplitude: f64, modes: usize },
    File { path: PathBuf, format: SnapshotFormat },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProfileConfig {
    Sine { amplitude: f64, modes: Vec<usize> },
    Gaussian { amplitude: f64, width: f64, center: Option<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForcingConfig {
    Zero,
    Windowed { profile: ProfileConfig, temporal: Temporal, cutoff: Option<f64>, class: ForcingClass },
    /// CSV rows `t,index,re,im`; frames are linearly interpolated and vanish after the last time.
    File { path: PathBuf, class: ForcingClass },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
    pub snapshot_format: SnapshotFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Every ledger row has `identity_residual ≤ 10 tol`.
    MassIdentity,
    /// Every resolvent solve satisfied the nonexpansivity bound.
    Apriori,
    /// Mass falls below the threshold and stays there.
    Extinction,
    /// `T_num` is not earlier than the reverse-inequality bound (within slack).
    LowerBound,
    /// `T_num` is not later than the envelope extinction time (within slack).
    UpperBound,
    /// Mass stays below the run-derived envelope.
    Envelope,
    /// Mass stays above the reverse-inequality floor until extinction.
    Floor,
    /// Exponential fit with `r² ≥ 0.99` over the configured decades of decay.
    ExponentialDecay,
    /// Algebraic exponent within the fit slack of its theoretical value.
    AlgebraicDecay,
    /// Paired-run contraction inequality.
    Contraction,
    /// Gradient bound for constant potentials.
    H1Monitor,
    /// Tails of the norms decrease over the last quarter of the horizon.
    Vanishing,
    /// Smallness conditions hold and mass is below the threshold by `T0 (1 + slack)`.
    Smallness,
}

impl CheckKind {
    pub const ALL: [CheckKind; 13] = [
        CheckKind::MassIdentity,
        CheckKind::Apriori,
        CheckKind::Extinction,
        CheckKind::LowerBound,
        CheckKind::UpperBound,
        CheckKind::Envelope,
        CheckKind::Floor,
        CheckKind::ExponentialDecay,
        CheckKind::AlgebraicDecay,
        CheckKind::Contraction,
        CheckKind::H1Monitor,
        CheckKind::Vanishing,
        CheckKind::Smallness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::MassIdentity => "mass_identity",
            CheckKind::Apriori => "apriori",
            CheckKind::Extinction => "extinction",
            CheckKind::LowerBound => "lower_bound",
            CheckKind::UpperBound => "upper_bound",
            CheckKind::Envelope => "envelope",
            CheckKind::Floor => "floor",
            CheckKind::ExponentialDecay => "exponential_decay",
            CheckKind::AlgebraicDecay => "algebraic_decay",
            CheckKind::Contraction => "contraction",
            CheckKind::H1Monitor => "h1_monitor",
            CheckKind::Vanishing => "vanishing",
            CheckKind::Smallness => "smallness",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksConfig {
    pub list: Vec<CheckKind>,
    /// Relative slack on bound comparisons.
    pub slack: f64,
    /// Relative slack on fitted exponents.
    pub fit_slack: f64,
    pub threshold: f64,
    pub h1_tolerance: f64,
    /// Start of the forcing-free regime; defaults to the forcing cutoff (or 0).
    pub t0: Option<f64>,
    /// Decades of mass decay covered by decay fits.
    pub decades: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            list: Vec::new(),
            slack: 0.05,
            fit_slack: 0.15,
            threshold: crate::extinct::EXTINCTION_THRESHOLD,
            h1_tolerance: 0.05,
            t0: None,
            decades: 1.0,
        }
    }
}

/// Second trajectory for contraction checks; missing parts copy the main run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerConfig {
    pub initial: Option<InitialConfig>,
    pub forcing: Option<ForcingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub grid: GridConfig,
    pub equation: EquationConfig,
    pub potential: PotentialConfig,
    pub beta: Option<f64>,
    pub initial: InitialConfig,
    pub forcing: ForcingConfig,
    pub time: TimeConfig,
    pub solver: SolverOptions,
    pub output: OutputConfig,
    pub checks: ChecksConfig,
    pub partner: Option<PartnerConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        parse_config(&std::fs::read_to_string(path)?)
    }

    /// Same configuration writing to a different directory.
    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output.dir = dir.into();
        self
    }

    pub fn emit(&self) -> String {
        emit_config(self)
    }
}

/// Walks a table, remembering which keys were read.
struct Reader<'a> {
    table: &'a Table,
    prefix: String,
    seen: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(table: &'a Table, prefix: &str) -> Self {
        Reader { table, prefix: prefix.to_string(), seen: Vec::new() }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        let (k, v) = self.table.get_key_value(key)?;
        self.seen.push(k.as_str());
        Some(v)
    }

    fn req(&mut self, key: &str) -> Result<&'a Value, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey(self.path(key)))
    }

    fn as_f64(&self, key: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(bad(&self.path(key), format!("expected a number, got {}", v.type_str()))),
        }
    }

    fn f64(&mut self, key: &str) -> Result<f64, ConfigError> {
        let v = self.req(key)?;
        self.as_f64(key, v)
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.opt_f64(key).map(|v| v.unwrap_or(default))
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            Some(v) => self.as_f64(key, v).map(Some),
            None => Ok(None),
        }
    }

    fn as_usize(&self, key: &str, v: &Value) -> Result<usize, ConfigError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(bad(&self.path(key), format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn usize(&mut self, key: &str) -> Result<usize, ConfigError> {
        let v = self.req(key)?;
        self.as_usize(key, v)
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            Some(v) => self.as_usize(key, v),
            None => Ok(default),
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(v) => Err(bad(&self.path(key), format!("expected a nonnegative integer, got {v}"))),
            None => Ok(default),
        }
    }

    fn str(&mut self, key: &str) -> Result<&'a str, ConfigError> {
        let v = self.req(key)?;
        v.as_str().ok_or_else(|| bad(&self.path(key), format!("expected a string, got {}", v.type_str())))
    }

    fn opt_str(&mut self, key: &str) -> Result<Option<&'a str>, ConfigError> {
        match self.get(key) {
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| bad(&self.path(key), format!("expected a string, got {}", v.type_str()))),
            None => Ok(None),
        }
    }

    fn opt_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| bad(&self.path(key), "expected an array of numbers"))?;
        arr.iter().map(|x| self.as_f64(key, x)).collect::<Result<Vec<_>, _>>().map(Some)
    }

    fn f64_list(&mut self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.opt_f64_list(key)?.ok_or_else(|| ConfigError::MissingKey(self.path(key)))
    }

    fn opt_usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let arr = v.as_array().ok_or_else(|| bad(&self.path(key), "expected an array of integers"))?;
        arr.iter().map(|x| self.as_usize(key, x)).collect::<Result<Vec<_>, _>>().map(Some)
    }

    fn opt_table(&mut self, key: &str) -> Result<Option<Reader<'a>>, ConfigError> {
        match self.get(key) {
            Some(Value::Table(t)) => Ok(Some(Reader::new(t, &self.path(key)))),
            Some(v) => Err(bad(&self.path(key), format!("expected a table, got {}", v.type_str()))),
            None => Ok(None),
        }
    }

    fn table(&mut self, key: &str) -> Result<Reader<'a>, ConfigError> {
        self.opt_table(key)?.ok_or_else(|| ConfigError::MissingKey(self.path(key)))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(k) => Err(bad(&self.path(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be nonnegative and finite, got {v}")))
    }
}

fn check_axes(key: &str, v: &Option<Vec<f64>>, dim: usize) -> Result<(), ConfigError> {
    match v {
        Some(c) if c.len() != dim => Err(bad(key, format!("expected {dim} components, got {}", c.len()))),
        _ => Ok(()),
    }
}

fn parse_modes(r: &mut Reader<'_>, dim: usize) -> Result<Vec<usize>, ConfigError> {
    let modes = r.opt_usize_list("modes")?.unwrap_or_else(|| vec![1; dim]);
    if modes.len() != dim || modes.contains(&0) {
        return Err(bad(&r.path("modes"), format!("expected {dim} positive mode numbers")));
    }
    Ok(modes)
}

fn parse_class(r: &mut Reader<'_>) -> Result<ForcingClass, ConfigError> {
    match r.opt_str("class")? {
        None | Some("L1L2") => Ok(ForcingClass::L1L2),
        Some("W11L2") => Ok(ForcingClass::W11L2),
        Some("H10") => Ok(ForcingClass::H10),
        Some(other) => Err(bad(&r.path("class"), format!("expected L1L2, W11L2 or H10, got {other:?}"))),
    }
}

fn class_name(c: ForcingClass) -> &'static str {
    match c {
        ForcingClass::L1L2 => "L1L2",
        ForcingClass::W11L2 => "W11L2",
        ForcingClass::H10 => "H10",
    }
}

fn parse_format(r: &mut Reader<'_>) -> Result<SnapshotFormat, ConfigError> {
    match r.opt_str("format")? {
        None | Some("csv") => Ok(SnapshotFormat::Csv),
        Some("binary") => Ok(SnapshotFormat::Binary),
        Some(other) => Err(bad(&r.path("format"), format!("expected csv or binary, got {other:?}"))),
    }
}

fn parse_initial(mut r: Reader<'_>, dim: usize) -> Result<InitialConfig, ConfigError> {
    let kind = r.str("kind")?;
    let out = match kind {
        "zero" => InitialConfig::Zero,
        "gaussian" => {
            let amplitude = r.f64("amplitude")?;
            let width = positive(&r.path("width"), r.f64("width")?)?;
            let center = r.opt_f64_list("center")?;
            check_axes(&r.path("center"), &center, dim)?;
            let wavevector = r.opt_f64_list("wavevector")?;
            check_axes(&r.path("wavevector"), &wavevector, dim)?;
            InitialConfig::Gaussian { amplitude, width, center, wavevector }
        }
        "sine" => {
            let amplitude = r.f64("amplitude")?;
            let modes = parse_modes(&mut r, dim)?;
            InitialConfig::Sine { amplitude, modes }
        }
        "random" => {
            let amplitude = nonnegative(&r.path("amplitude"), r.f64("amplitude")?)?;
            let modes = r.usize_or("modes", 4)?;
            if modes == 0 {
                return Err(bad(&r.path("modes"), "must be at least 1"));
            }
            InitialConfig::Random { amplitude, modes }
        }
        "file" => {
            let path = PathBuf::from(r.str("path")?);
            let format = parse_format(&mut r)?;
            InitialConfig::File { path, format }
        }
        other => {
            return Err(bad(&r.path("kind"), format!("expected zero, gaussian, sine, random or file, got {other:?}")))
        }
    };
    r.finish()?;
    Ok(out)
}

fn parse_forcing(mut r: Reader<'_>, dim: usize) -> Result<ForcingConfig, ConfigError> {
    let kind = r.str("kind")?;
    let out = match kind {
        "zero" => ForcingConfig::Zero,
        "windowed" => {
            let profile = match r.str("profile")? {
                "sine" => {
                    let amplitude = r.f64("amplitude")?;
                    let modes = parse_modes(&mut r, dim)?;
                    ProfileConfig::Sine { amplitude, modes }
                }
                "gaussian" => {
                    let amplitude = r.f64("amplitude")?;
                    let width = positive(&r.path("width"), r.f64("width")?)?;
                    let center = r.opt_f64_list("center")?;
                    check_axes(&r.path("center"), &center, dim)?;
                    ProfileConfig::Gaussian { amplitude, width, center }
                }
                other => return Err(bad(&r.path("profile"), format!("expected sine or gaussian, got {other:?}"))),
            };
            let cutoff = r.opt_f64("cutoff")?;
            if let Some(c) = cutoff {
                nonnegative(&r.path("cutoff"), c)?;
            }
            let temporal = match r.opt_str("temporal")?.unwrap_or("constant") {
                "constant" => Temporal::Constant,
                "oscillating" => Temporal::Oscillating { omega: r.f64("omega")? },
                "decaying" => Temporal::Decaying { rate: nonnegative(&r.path("rate"), r.f64("rate")?)? },
                "power" => {
                    if cutoff.is_none() {
                        return Err(ConfigError::MissingKey(r.path("cutoff")));
                    }
                    Temporal::PowerToCutoff { power: nonnegative(&r.path("power"), r.f64("power")?)? }
                }
                other => {
                    return Err(bad(
                        &r.path("temporal"),
                        format!("expected constant, oscillating, decaying or power, got {other:?}"),
                    ))
                }
            };
            let class = parse_class(&mut r)?;
            ForcingConfig::Windowed { profile, temporal, cutoff, class }
        }
        "file" => {
            let path = PathBuf::from(r.str("path")?);
            let class = parse_class(&mut r)?;
            ForcingConfig::File { path, class }
        }
        other => return Err(bad(&r.path("kind"), format!("expected zero, windowed or file, got {other:?}"))),
    };
    r.finish()?;
    Ok(out)
}

fn parse_potential(mut r: Reader<'_>, dim: usize) -> Result<(PotentialConfig, Option<f64>), ConfigError> {
    let kind = r.str("kind")?;
    let beta = r.opt_f64("beta")?;
    if let Some(b) = beta {
        positive(&r.path("beta"), b)?;
    }
    let out = match kind {
        "zero" => PotentialConfig::Zero,
        "constant" => PotentialConfig::Constant { value: r.f64("value")? },
        "harmonic" => {
            let omega = r.f64("omega")?;
            let center = r.opt_f64_list("center")?;
            check_axes(&r.path("center"), &center, dim)?;
            PotentialConfig::Harmonic { omega, center }
        }
        "random" => {
            let amplitude = nonnegative(&r.path("amplitude"), r.f64("amplitude")?)?;
            let tail_amplitude = r.f64_or("tail_amplitude", 0.0)?;
            let tail_exponent = nonnegative(&r.path("tail_exponent"), r.f64_or("tail_exponent", 0.25)?)?;
            let p_v = crate::grid::potential_exponent(dim, Some(beta.unwrap_or(1.0))).unwrap_or(2.0);
            if tail_exponent * p_v >= dim as f64 {
                return Err(bad(
                    &r.path("tail_exponent"),
                    format!("tail |x|^-{tail_exponent} is not in L^{p_v} near its centre"),
                ));
            }
            PotentialConfig::Random { amplitude, tail_amplitude, tail_exponent }
        }
        other => {
            return Err(bad(&r.path("kind"), format!("expected zero, constant, harmonic or random, got {other:?}")))
        }
    };
    r.finish()?;
    Ok((out, beta))
}

/// Parses and validates a TOML run description.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut root = Reader::new(&table, "");
    let name = root.opt_str("name")?.unwrap_or("run").to_string();
    let seed = root.u64_or("seed", 0)?;

    let mut g = root.table("grid")?;
    let lengths = g.f64_list("lengths")?;
    let counts = g
        .opt_usize_list("counts")?
        .ok_or_else(|| ConfigError::MissingKey(g.path("counts")))?;
    let grid = GridConfig { lengths, counts };
    grid.spec().map_err(|e| bad("grid", e.to_string()))?;
    g.finish()?;
    let dim = grid.lengths.len();

    let mut eq = root.table("equation")?;
    let m = eq.f64("m")?;
    let exponent = Exponent::new(m).map_err(|e| bad("equation.m", e.to_string()))?;
    let a = match (eq.opt_f64("a_re")?, eq.opt_f64("a_im")?, eq.opt_f64("ray_re")?) {
        (Some(re), Some(im), None) => CoefficientConfig::Explicit { re, im },
        (None, None, Some(re)) => CoefficientConfig::Ray { re },
        (None, None, None) => return Err(ConfigError::MissingKey("equation.ray_re".into())),
        (Some(_), None, None) => return Err(ConfigError::MissingKey("equation.a_im".into())),
        (None, Some(_), None) => return Err(ConfigError::MissingKey("equation.a_re".into())),
        _ => return Err(bad("equation", "give either a_re and a_im, or ray_re, not both")),
    };
    let eps = nonnegative("equation.eps", eq.f64_or("eps", DEFAULT_EPS)?)?;
    eq.finish()?;
    let equation = EquationConfig { m, a, eps };
    let coefficient = match a {
        CoefficientConfig::Ray { re } => {
            make_dm_coefficient(exponent, re).map_err(|e| bad("equation.ray_re", e.to_string()))?
        }
        CoefficientConfig::Explicit { re, im } => Complex64::new(re, im),
    };
    if !classify(coefficient, exponent).in_cone() {
        return Err(ConfigError::CoefficientOutsideC {
            re: coefficient.re,
            im: coefficient.im,
            m,
            lhs: 2.0 * m.sqrt() * coefficient.im,
            rhs: (1.0 - m) * coefficient.re.abs(),
        });
    }

    let (potential, beta) = match root.opt_table("potential")? {
        Some(p) => parse_potential(p, dim)?,
        None => (PotentialConfig::Zero, None),
    };
    let initial = parse_initial(root.table("initial")?, dim)?;
    let forcing = match root.opt_table("forcing")? {
        Some(f) => parse_forcing(f, dim)?,
        None => ForcingConfig::Zero,
    };

    let mut t = root.table("time")?;
    let dt = positive("time.dt", t.f64("dt")?)?;
    let steps = t.usize("steps")?;
    let scheme = match t.opt_str("scheme")?.unwrap_or("implicit_euler") {
        "implicit_euler" => Scheme::ImplicitEuler,
        "crank_nicolson" => Scheme::CrankNicolson,
        other => return Err(bad("time.scheme", format!("expected implicit_euler or crank_nicolson, got {other:?}"))),
    };
    t.finish()?;
    let time = TimeConfig { dt, steps, scheme };

    let mut solver = SolverOptions { tol: DEFAULT_TOL, ..SolverOptions::default() };
    if let Some(mut s) = root.opt_table("solver")? {
        solver.tol = positive("solver.tol", s.f64_or("tol", DEFAULT_TOL)?)?;
        solver.max_iter = s.usize_or("max_iter", solver.max_iter)?;
        solver.gmres_restart = s.usize_or("gmres_restart", solver.gmres_restart)?;
        solver.max_linear_iter = s.usize_or("max_linear_iter", solver.max_linear_iter)?;
        solver.method = match s.opt_str("method")?.unwrap_or("auto") {
            "auto" => MethodChoice::Auto,
            "newton" => MethodChoice::Newton,
            "picard" => MethodChoice::Picard,
            other => return Err(bad("solver.method", format!("expected auto, newton or picard, got {other:?}"))),
        };
        if solver.gmres_restart == 0 {
            return Err(bad("solver.gmres_restart", "must be at least 1"));
        }
        s.finish()?;
    }

    let mut output = OutputConfig { dir: PathBuf::from("out"), snapshot_stride: 0, snapshot_format: SnapshotFormat::Csv };
    if let Some(mut o) = root.opt_table("output")? {
        if let Some(d) = o.opt_str("dir")? {
            output.dir = PathBuf::from(d);
        }
        output.snapshot_stride = o.usize_or("snapshot_stride", 0)?;
        output.snapshot_format = parse_format(&mut o)?;
        o.finish()?;
    }

    let mut checks = ChecksConfig::default();
    if let Some(mut c) = root.opt_table("checks")? {
        if let Some(v) = c.get("list") {
            let arr = v.as_array().ok_or_else(|| bad("checks.list", "expected an array of check names"))?;
            for item in arr {
                let name = item.as_str().ok_or_else(|| bad("checks.list", "expected check names as strings"))?;
                let kind = CheckKind::from_name(name).ok_or_else(|| bad("checks.list", format!("unknown check {name:?}")))?;
                if !checks.list.contains(&kind) {
                    checks.list.push(kind);
                }
            }
        }
        checks.slack = nonnegative("checks.slack", c.f64_or("slack", checks.slack)?)?;
        checks.fit_slack = nonnegative("checks.fit_slack", c.f64_or("fit_slack", checks.fit_slack)?)?;
        checks.threshold = positive("checks.threshold", c.f64_or("threshold", checks.threshold)?)?;
        checks.h1_tolerance = nonnegative("checks.h1_tolerance", c.f64_or("h1_tolerance", checks.h1_tolerance)?)?;
        checks.t0 = c.opt_f64("t0")?.map(|v| nonnegative("checks.t0", v)).transpose()?;
        checks.decades = positive("checks.decades", c.f64_or("decades", checks.decades)?)?;
        c.finish()?;
    }

    let partner = match root.opt_table("partner")? {
        Some(mut p) => {
            let initial = p.opt_table("initial")?.map(|r| parse_initial(r, dim)).transpose()?;
            let forcing = p.opt_table("forcing")?.map(|r| parse_forcing(r, dim)).transpose()?;
            p.finish()?;
            Some(PartnerConfig { initial, forcing })
        }
        None => None,
    };
    root.finish()?;

    Ok(RunConfig {
        name,
        seed,
        grid,
        equation,
        potential,
        beta,
        initial,
        forcing,
        time,
        solver,
        output,
        checks,
        partner,
    })
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn ints(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|x| Value::Integer(*x as i64)).collect())
}

fn s(v: &str) -> Value {
    Value::String(v.to_string())
}

fn emit_initial(c: &InitialConfig) -> Table {
    let mut t = Table::new();
    match c {
        InitialConfig::Zero => {
            t.insert("kind".into(), s("zero"));
        }
        InitialConfig::Gaussian { amplitude, width, center, wavevector } => {
            t.insert("kind".into(), s("gaussian"));
            t.insert("amplitude".into(), Value::Float(*amplitude));
            t.insert("width".into(), Value::Float(*width));
            if let Some(c) = center {
                t.insert("center".into(), floats(c));
            }
            if let Some(k) = wavevector {
                t.insert("wavevector".into(), floats(k));
            }
        }
        InitialConfig::Sine { amplitude, modes } => {
            t.insert("kind".into(), s("sine"));
            t.insert("amplitude".into(), Value::Float(*amplitude));
            t.insert("modes".into(), ints(modes));
        }
        InitialConfig::Random { amplitude, modes } => {
            t.insert("kind".into(), s("random"));
            t.insert("amplitude".into(), Value::Float(*amplitude));
            t.insert("modes".into(), Value::Integer(*modes as i64));
        }
        InitialConfig::File { path, format } => {
            t.insert("kind".into(), s("file"));
            t.insert("path".into(), s(&path.to_string_lossy()));
            t.insert("format".into(), s(format.name()));
        }
    }
    t
}

fn emit_forcing(c: &ForcingConfig) -> Table {
    let mut t = Table::new();
    match c {
        ForcingConfig::Zero => {
            t.insert("kind".into(), s("zero"));
        }
        ForcingConfig::Windowed { profile, temporal, cutoff, class } => {
            t.insert("kind".into(), s("windowed"));
            match profile {
                ProfileConfig::Sine { amplitude, modes } => {
                    t.insert("profile".into(), s("sine"));
                    t.insert("amplitude".into(), Value::Float(*amplitude));
                    t.insert("modes".into(), ints(modes));
                }
                ProfileConfig::Gaussian { amplitude, width, center } => {
                    t.insert("profile".into(), s("gaussian"));
                    t.insert("amplitude".into(), Value::Float(*amplitude));
                    t.insert("width".into(), Value::Float(*width));
                    if let Some(c) = center {
                        t.insert("center".into(), floats(c));
                    }
                }
            }
            match *temporal {
                Temporal::Constant => {
                    t.insert("temporal".into(), s("constant"));
                }
                Temporal::Oscillating { omega } => {
                    t.insert("temporal".into(), s("oscillating"));
                    t.insert("omega".into(), Value::Float(omega));
                }
                Temporal::Decaying { rate } => {
                    t.insert("temporal".into(), s("decaying"));
                    t.insert("rate".into(), Value::Float(rate));
                }
                Temporal::PowerToCutoff { power } => {
                    t.insert("temporal".into(), s("power"));
                    t.insert("power".into(), Value::Float(power));
                }
            }
            if let Some(c) = cutoff {
                t.insert("cutoff".into(), Value::Float(*c));
            }
            t.insert("class".into(), s(class_name(*class)));
        }
        ForcingConfig::File { path, class } => {
            t.insert("kind".into(), s("file"));
            t.insert("path".into(), s(&path.to_string_lossy()));
            t.insert("class".into(), s(class_name(*class)));
        }
    }
    t
}

/// Serialises a configuration so that `parse_config(&emit_config(c)) == c`.
pub fn emit_config(c: &RunConfig) -> String {
    let mut root = Table::new();
    root.insert("name".into(), s(&c.name));
    root.insert("seed".into(), Value::Integer(c.seed as i64));

    let mut grid = Table::new();
    grid.insert("lengths".into(), floats(&c.grid.lengths));
    grid.insert("counts".into(), ints(&c.grid.counts));
    root.insert("grid".into(), Value::Table(grid));

    let mut eq = Table::new();
    eq.insert("m".into(), Value::Float(c.equation.m));
    match c.equation.a {
        CoefficientConfig::Explicit { re, im } => {
            eq.insert("a_re".into(), Value::Float(re));
            eq.insert("a_im".into(), Value::Float(im));
        }
        CoefficientConfig::Ray { re } => {
            eq.insert("ray_re".into(), Value::Float(re));
        }
    }
    eq.insert("eps".into(), Value::Float(c.equation.eps));
    root.insert("equation".into(), Value::Table(eq));

    let mut pot = Table::new();
    match &c.potential {
        PotentialConfig::Zero => {
            pot.insert("kind".into(), s("zero"));
        }
        PotentialConfig::Constant { value } => {
            pot.insert("kind".into(), s("constant"));
            pot.insert("value".into(), Value::Float(*value));
        }
        PotentialConfig::Harmonic { omega, center } => {
            pot.insert("kind".into(), s("harmonic"));
            pot.insert("omega".into(), Value::Float(*omega));
            if let Some(c) = center {
                pot.insert("center".into(), floats(c));
            }
        }
        PotentialConfig::Random { amplitude, tail_amplitude, tail_exponent } => {
            pot.insert("kind".into(), s("random"));
            pot.insert("amplitude".into(), Value::Float(*amplitude));
            pot.insert("tail_amplitude".into(), Value::Float(*tail_amplitude));
            pot.insert("tail_exponent".into(), Value::Float(*tail_exponent));
        }
    }
    if let Some(b) = c.beta {
        pot.insert("beta".into(), Value::Float(b));
    }
    root.insert("potential".into(), Value::Table(pot));
    root.insert("initial".into(), Value::Table(emit_initial(&c.initial)));
    root.insert("forcing".into(), Value::Table(emit_forcing(&c.forcing)));

    let mut time = Table::new();
    time.insert("dt".into(), Value::Float(c.time.dt));
    time.insert("steps".into(), Value::Integer(c.time.steps as i64));
    let scheme = match c.time.scheme {
        Scheme::ImplicitEuler => "implicit_euler",
        Scheme::CrankNicolson => "crank_nicolson",
    };
    time.insert("scheme".into(), s(scheme));
    root.insert("time".into(), Value::Table(time));

    let mut solver = Table::new();
    solver.insert("tol".into(), Value::Float(c.solver.tol));
    solver.insert("max_iter".into(), Value::Integer(c.solver.max_iter as i64));
    let method = match c.solver.method {
        MethodChoice::Auto => "auto",
        MethodChoice::Newton => "newton",
        MethodChoice::Picard => "picard",
    };
    solver.insert("method".into(), s(method));
    solver.insert("gmres_restart".into(), Value::Integer(c.solver.gmres_restart as i64));
    solver.insert("max_linear_iter".into(), Value::Integer(c.solver.max_linear_iter as i64));
    root.insert("solver".into(), Value::Table(solver));

    let mut out = Table::new();
    out.insert("dir".into(), s(&c.output.dir.to_string_lossy()));
    out.insert("snapshot_stride".into(), Value::Integer(c.output.snapshot_stride as i64));
    out.insert("format".into(), s(c.output.snapshot_format.name()));
    root.insert("output".into(), Value::Table(out));

    let mut checks = Table::new();
    checks.insert("list".into(), Value::Array(c.checks.list.iter().map(|k| s(k.name())).collect()));
    checks.insert("slack".into(), Value::Float(c.checks.slack));
    checks.insert("fit_slack".into(), Value::Float(c.checks.fit_slack));
    checks.insert("threshold".into(), Value::Float(c.checks.threshold));
    checks.insert("h1_tolerance".into(), Value::Float(c.checks.h1_tolerance));
    if let Some(t0) = c.checks.t0 {
        checks.insert("t0".into(), Value::Float(t0));
    }
    checks.insert("decades".into(), Value::Float(c.checks.decades));
    root.insert("checks".into(), Value::Table(checks));

    if let Some(p) = &c.partner {
        let mut t = Table::new();
        if let Some(i) = &p.initial {
            t.insert("initial".into(), Value::Table(emit_initial(i)));
        }
        if let Some(f) = &p.forcing {
            t.insert("forcing".into(), Value::Table(emit_forcing(f)));
        }
        root.insert("partner".into(), Value::Table(t));
    }
    toml::to_string(&root).expect("tables of plain values always serialise")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [grid]
        lengths = [1.0]
        counts = [32]

        [equation]
        m = 0.5
        ray_re = 1.0

        [initial]
        kind = "sine"
        amplitude = 1.0

        [time]
        dt = 1e-3
        steps = 10
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.equation.eps, 1e-12);
        assert_eq!(c.solver.tol, 1e-10);
        assert_eq!(c.forcing, ForcingConfig::Zero);
        assert_eq!(c.potential, PotentialConfig::Zero);
        assert_eq!(c.initial, InitialConfig::Sine { amplitude: 1.0, modes: vec![1] });
        assert_eq!(c.equation.classification(), Classification::InD);
    }

    #[test]
    fn coefficient_outside_cone_rejected() {
        let text = MINIMAL.replace("ray_re = 1.0", "a_re = 1.0\na_im = -1.0");
        assert!(matches!(parse_config(&text), Err(ConfigError::CoefficientOutsideC { .. })));
        let text = MINIMAL.replace("ray_re = 1.0", "a_re = 1.0\na_im = 0.3");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("2√m Im(a)"), "{err}");
    }

    #[test]
    fn missing_and_bad_keys_name_their_path() {
        let text = MINIMAL.replace("dt = 1e-3", "");
        assert!(matches!(parse_config(&text), Err(ConfigError::MissingKey(k)) if k == "time.dt"));
        let text = MINIMAL.replace("dt = 1e-3", "dt = -1.0");
        assert!(matches!(parse_config(&text), Err(ConfigError::BadValue { key, .. }) if key == "time.dt"));
        let text = MINIMAL.replace("amplitude = 1.0", "amplitude = \"big\"");
        assert!(matches!(parse_config(&text), Err(ConfigError::BadValue { key, .. }) if key == "initial.amplitude"));
        let text = MINIMAL.replace("steps = 10", "steps = 10\nstpes = 3");
        assert!(matches!(parse_config(&text), Err(ConfigError::BadValue { key, .. }) if key == "time.stpes"));
        let text = MINIMAL.replace("m = 0.5", "m = 1.5");
        assert!(matches!(parse_config(&text), Err(ConfigError::BadValue { key, .. }) if key == "equation.m"));
        assert!(matches!(parse_config("grid = ["), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn round_trip_full_config() {
        let text = r#"
            name = "full"
            seed = 7
            [grid]
            lengths = [1.0, 2.0]
            counts = [8, 9]
            [equation]
            m = 0.3
            a_re = 0.5
            a_im = 2.0
            eps = 1e-8
            [potential]
            kind = "random"
            amplitude = 0.5
            tail_amplitude = 0.1
            beta = 0.5
            [initial]
            kind = "gaussian"
            amplitude = 1.0
            width = 0.1
            center = [0.5, 1.0]
            wavevector = [3.0, 0.0]
            [forcing]
            kind = "windowed"
            profile = "sine"
            amplitude = 0.2
            temporal = "power"
            power = 3
            cutoff = 0.5
            class = "H10"
            [time]
            dt = 0.01
            steps = 5
            scheme = "crank_nicolson"
            [solver]
            tol = 1e-11
            method = "picard"
            [output]
            dir = "somewhere"
            snapshot_stride = 2
            format = "binary"
            [checks]
            list = ["mass_identity", "contraction"]
            t0 = 0.5
            [partner]
            [partner.initial]
            kind = "random"
            amplitude = 0.3
        "#;
        let c = parse_config(text).unwrap();
        let emitted = c.emit();
        let back = parse_config(&emitted).unwrap();
        assert_eq!(back, c);
        assert_eq!(parse_config(&back.emit()).unwrap(), c);
    }

    #[test]
    fn power_forcing_needs_cutoff() {
        let text = format!("{MINIMAL}\n[forcing]\nkind = \"windowed\"\nprofile = \"sine\"\namplitude = 1.0\ntemporal = \"power\"\npower = 2\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::MissingKey(k)) if k == "forcing.cutoff"));
    }
}
