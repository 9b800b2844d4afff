//! Configuration-driven pipelines: a flat `key = value` file, flag overrides and the
//! `extend`, `approximate`, `certify` and `counterexample` commands.
//!
//! Every input is loaded and validated before anything is written, and all report files are
//! written together at the end of a successful run, so a failing run leaves no partial output.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::approximant::{ApproximantBuilder, ApproximantError, HarmonicApproximant};
use crate::curve::CurveError;
use crate::extension::{BoundaryData, DataError, ExtensionConfig, ExtensionError, ExtensionField};
use crate::modulus::{Modulus, ModulusError};
use crate::potential::{EvalMode, PotentialError};
use crate::verify::{self, CertifySettings, VerifyError};
use crate::{Point3, PolylineCurve};

/// Where a configuration value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    Line(usize),
    Flag(&'static str),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::Line(l) => write!(f, "line {l}"),
            Origin::Flag(name) => write!(f, "flag --{name}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` already set on line {first}")]
    DuplicateKey { line: usize, key: String, first: usize },
    #[error("{origin}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { origin: Origin, key: &'static str, value: String, reason: String },
    #[error("{origin}: curve `{spec}`: {source}")]
    Curve { origin: Origin, spec: String, source: CurveError },
    #[error("{origin}: data `{spec}`: {source}")]
    Data { origin: Origin, spec: String, source: DataError },
    #[error("{origin}: modulus `{spec}`: {source}")]
    Modulus { origin: Origin, spec: String, source: ModulusError },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("extension: {0}")]
    Extension(#[from] ExtensionError),
    #[error("approximant: {0}")]
    Approximant(#[from] ApproximantError),
    #[error("verify: {0}")]
    Verify(#[from] VerifyError),
    #[error("potential: {0}")]
    Potential(#[from] PotentialError),
    #[error("output {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit status for an error: always 2.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Extend,
    Approximate,
    Certify,
    Counterexample,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Extend => "extend",
            Command::Approximate => "approximate",
            Command::Certify => "certify",
            Command::Counterexample => "counterexample",
        }
    }
}

/// Curve source: a builtin or a vertex file.
#[derive(Clone, Debug, PartialEq)]
pub enum CurveSpec {
    /// Segment from `(−1,0,0)` to `(1,0,0)`.
    Segment,
    /// Helix of radius 1, pitch 0.5, one turn, 256 vertices.
    Helix,
    File(PathBuf),
}

impl CurveSpec {
    fn parse(s: &str) -> Self {
        match s {
            "segment" => CurveSpec::Segment,
            "helix" => CurveSpec::Helix,
            path => CurveSpec::File(PathBuf::from(path)),
        }
    }

    pub fn load(&self) -> Result<PolylineCurve, CurveError> {
        match self {
            CurveSpec::Segment => PolylineCurve::segment(Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)),
            CurveSpec::Helix => PolylineCurve::helix(1.0, 0.5, 1.0, 256),
            CurveSpec::File(p) => PolylineCurve::load(p),
        }
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::Segment => write!(f, "segment"),
            CurveSpec::Helix => write!(f, "helix"),
            CurveSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Boundary data source.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    /// Trace of `f₀*(x₁)` built from the configured modulus.
    F0Star,
    /// Trace of the harmonic polynomial `x² − z²`.
    Harmonic,
    Constant(f64),
    /// Two-column file `(arc parameter, value)`.
    File(PathBuf),
}

impl DataSpec {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "f0star" => Ok(DataSpec::F0Star),
            "harmonic" => Ok(DataSpec::Harmonic),
            "constant" => Ok(DataSpec::Constant(1.0)),
            _ => match s.strip_prefix("constant:") {
                Some(c) => parse_finite(c).map(DataSpec::Constant),
                None => Ok(DataSpec::File(PathBuf::from(s))),
            },
        }
    }

    pub fn load(&self, omega: &Modulus) -> Result<BoundaryData, DataError> {
        match self {
            DataSpec::F0Star => Ok(BoundaryData::PrimitiveTrace(omega.clone())),
            DataSpec::Harmonic => Ok(BoundaryData::HarmonicTrace),
            DataSpec::Constant(c) => Ok(BoundaryData::Constant(*c)),
            DataSpec::File(p) => BoundaryData::load(p),
        }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSpec::F0Star => write!(f, "f0star"),
            DataSpec::Harmonic => write!(f, "harmonic"),
            DataSpec::Constant(c) => write!(f, "constant:{c}"),
            DataSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Modulus family: `power:α`, `powerlog:α:β` or `table:path`.
#[derive(Clone, Debug, PartialEq)]
pub enum ModulusSpec {
    Power(f64),
    PowerLog(f64, f64),
    Table(PathBuf),
}

impl ModulusSpec {
    fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.splitn(3, ':').collect();
        match parts.as_slice() {
            ["power", a] => Ok(ModulusSpec::Power(parse_finite(a)?)),
            ["powerlog", a, b] => Ok(ModulusSpec::PowerLog(parse_finite(a)?, parse_finite(b)?)),
            ["table", path] if !path.is_empty() => Ok(ModulusSpec::Table(PathBuf::from(*path))),
            _ => Err("expected power:ALPHA, powerlog:ALPHA:BETA or table:PATH".into()),
        }
    }

    pub fn load(&self, t_max: f64) -> Result<Modulus, ModulusError> {
        match self {
            ModulusSpec::Power(a) => Modulus::power(*a, t_max),
            ModulusSpec::PowerLog(a, b) => Modulus::power_log(*a, *b, t_max),
            ModulusSpec::Table(p) => Modulus::load_table(p),
        }
    }
}

impl fmt::Display for ModulusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulusSpec::Power(a) => write!(f, "power:{a}"),
            ModulusSpec::PowerLog(a, b) => write!(f, "powerlog:{a}:{b}"),
            ModulusSpec::Table(p) => write!(f, "table:{}", p.display()),
        }
    }
}

fn parse_finite(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err("not finite".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Parses `a..b`, `a-b` or a single level.
pub fn parse_levels(s: &str) -> Result<(usize, usize), String> {
    let s = s.trim();
    let (a, b) = s.split_once("..").or_else(|| s.split_once('-')).unwrap_or((s, s));
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    let (a, b) = (p(a)?, p(b)?);
    if a > b {
        return Err("empty range".into());
    }
    Ok((a, b))
}

/// Keys accepted in configuration files.
pub const KEYS: &[&str] = &[
    "curve",
    "data",
    "modulus",
    "t_max",
    "levels",
    "n_max",
    "quad_nodes",
    "theta_ref",
    "mac_theta",
    "fd_kappa",
    "out",
    "seed",
    "spread_bound",
    "probes",
    "harmonic_trials",
    "cx_rows",
    "cx_first",
    "cx_delta_base",
    "cx_lambda_base",
    "cx_lambda_scale",
    "cx_threshold",
];

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub curve: CurveSpec,
    pub data: DataSpec,
    pub modulus: ModulusSpec,
    /// Domain cap of the parametric moduli.
    pub t_max: f64,
    /// Inclusive level range, inside `[2, n_max − 1]`.
    pub levels: (usize, usize),
    pub n_max: usize,
    /// Ball rule size: 48, 72, 160 or 512.
    pub quad_nodes: usize,
    /// Octree opening parameter of the Laplacian cloud, in `(0, 1]`.
    pub theta_ref: f64,
    /// Treecode acceptance parameter in `[0, 1)`; 0 selects direct summation.
    pub mac_theta: f64,
    /// Finite-difference step relative to the distance, in `(0, 1/4]`.
    pub fd_kappa: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// Allowed max/min ratio of normalized scaling constants.
    pub spread_bound: f64,
    /// Off-curve probes for `extend`.
    pub probes: usize,
    /// Mean-value probes per level for `certify`.
    pub harmonic_trials: usize,
    /// Counterexample rows: `k = cx_first ..`, `δ_k = cx_delta_base^−k`, `λ_k = cx_lambda_scale·cx_lambda_base^k`.
    pub cx_rows: usize,
    pub cx_first: i32,
    pub cx_delta_base: f64,
    pub cx_lambda_base: f64,
    pub cx_lambda_scale: f64,
    /// Ratio the counterexample table must exceed to report a contradiction.
    pub cx_threshold: f64,
    origins: Vec<(&'static str, Origin)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            curve: CurveSpec::Segment,
            data: DataSpec::F0Star,
            modulus: ModulusSpec::Power(0.5),
            t_max: 4.0,
            levels: (3, 6),
            n_max: 8,
            quad_nodes: 48,
            theta_ref: 0.25,
            mac_theta: 0.0,
            fd_kappa: 1.0 / 64.0,
            out: PathBuf::from("out"),
            seed: 2024,
            spread_bound: 3.0,
            probes: 1000,
            harmonic_trials: 200,
            cx_rows: 20,
            cx_first: 3,
            cx_delta_base: 4.0,
            cx_lambda_base: 2.0,
            cx_lambda_scale: 1.0,
            cx_threshold: 100.0,
            origins: Vec::new(),
        }
    }
}

fn invalid(origin: Origin, key: &'static str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { origin, key, value: value.to_string(), reason: reason.into() }
}

fn ranged<T: FromStr + PartialOrd + fmt::Display + Copy>(
    origin: Origin,
    key: &'static str,
    value: &str,
    lo: T,
    hi: T,
) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    let v: T = value.trim().parse().map_err(|e: T::Err| invalid(origin, key, value, e.to_string()))?;
    if !(v >= lo && v <= hi) {
        return Err(invalid(origin, key, value, format!("outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn open(origin: Origin, key: &'static str, value: &str, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    let v = parse_finite(value).map_err(|e| invalid(origin, key, value, e))?;
    if !(v > lo && v <= hi) {
        return Err(invalid(origin, key, value, format!("outside ({lo}, {hi}]")));
    }
    Ok(v)
}

impl RunConfig {
    /// Parses a configuration file body; unknown keys and bad values report their line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string(), first: *first });
            }
            seen.push((key.to_string(), line));
            cfg.set(key, value, Origin::Line(line))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Applies a flag override; `flag` names the flag in diagnostics. Call
    /// [`RunConfig::validate`] after the last override.
    pub fn apply_flag(&mut self, flag: &'static str, key: &'static str, value: &str) -> Result<(), ConfigError> {
        self.set(key, value, Origin::Flag(flag))
    }

    fn origin(&self, key: &str) -> Origin {
        self.origins.iter().rev().find(|(k, _)| *k == key).map_or(Origin::Default, |(_, o)| *o)
    }

    fn set(&mut self, key: &'static str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        match key {
            "curve" => {
                if value.is_empty() {
                    return Err(invalid(origin, key, value, "empty"));
                }
                self.curve = CurveSpec::parse(value);
            }
            "data" => {
                if value.is_empty() {
                    return Err(invalid(origin, key, value, "empty"));
                }
                self.data = DataSpec::parse(value).map_err(|e| invalid(origin, key, value, e))?;
            }
            "modulus" => self.modulus = ModulusSpec::parse(value).map_err(|e| invalid(origin, key, value, e))?,
            "t_max" => self.t_max = open(origin, key, value, 0.0, 1e6)?,
            "levels" => self.levels = parse_levels(value).map_err(|e| invalid(origin, key, value, e))?,
            "n_max" => self.n_max = ranged(origin, key, value, 4usize, 12)?,
            "quad_nodes" => {
                let q = ranged(origin, key, value, 1usize, 512)?;
                if ![48, 72, 160, 512].contains(&q) {
                    return Err(invalid(origin, key, value, "supported rules have 48, 72, 160 or 512 nodes"));
                }
                self.quad_nodes = q;
            }
            "theta_ref" => self.theta_ref = open(origin, key, value, 0.0, 1.0)?,
            "mac_theta" => {
                let v = ranged(origin, key, value, 0.0, 1.0)?;
                if v >= 1.0 {
                    return Err(invalid(origin, key, value, "outside [0, 1)"));
                }
                self.mac_theta = v;
            }
            "fd_kappa" => self.fd_kappa = open(origin, key, value, 0.0, 0.25)?,
            "out" => {
                if value.is_empty() {
                    return Err(invalid(origin, key, value, "empty"));
                }
                self.out = PathBuf::from(value);
            }
            "seed" => self.seed = value.parse().map_err(|e: std::num::ParseIntError| invalid(origin, key, value, e.to_string()))?,
            "spread_bound" => self.spread_bound = ranged(origin, key, value, 1.0, 1e6)?,
            "probes" => self.probes = ranged(origin, key, value, 1usize, 100_000)?,
            "harmonic_trials" => self.harmonic_trials = ranged(origin, key, value, 1usize, 100_000)?,
            "cx_rows" => self.cx_rows = ranged(origin, key, value, 1usize, 200)?,
            "cx_first" => self.cx_first = ranged(origin, key, value, 1i32, 200)?,
            "cx_delta_base" => self.cx_delta_base = open(origin, key, value, 1.0, 1e3)?,
            "cx_lambda_base" => self.cx_lambda_base = ranged(origin, key, value, 1.0, 1e3)?,
            "cx_lambda_scale" => self.cx_lambda_scale = open(origin, key, value, 0.0, 1e12)?,
            "cx_threshold" => self.cx_threshold = open(origin, key, value, 0.0, 1e300)?,
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        self.origins.push((key, origin));
        Ok(())
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (lo, hi) = self.levels;
        if lo < 2 || hi + 1 > self.n_max {
            let origin = match self.origin("levels") {
                Origin::Default => self.origin("n_max"),
                o => o,
            };
            return Err(invalid(
                origin,
                "levels",
                &format!("{lo}..{hi}"),
                format!("must lie in [2, n_max - 1] = [2, {}]", self.n_max - 1),
            ));
        }
        Ok(())
    }

    pub fn eval_mode(&self) -> EvalMode {
        if self.mac_theta > 0.0 {
            EvalMode::Tree { theta: self.mac_theta }
        } else {
            EvalMode::Direct
        }
    }

    pub fn load_modulus(&self) -> Result<Modulus, ConfigError> {
        self.modulus
            .load(self.t_max)
            .map_err(|source| ConfigError::Modulus { origin: self.origin("modulus"), spec: self.modulus.to_string(), source })
    }

    /// Loads curve, modulus and data and builds the extension field.
    pub fn load_field(&self) -> Result<(ExtensionField, Modulus), CliError> {
        let omega = self.load_modulus()?;
        let curve = self
            .curve
            .load()
            .map_err(|source| ConfigError::Curve { origin: self.origin("curve"), spec: self.curve.to_string(), source })?;
        let data = self
            .data
            .load(&omega)
            .map_err(|source| ConfigError::Data { origin: self.origin("data"), spec: self.data.to_string(), source })?;
        let config = ExtensionConfig {
            n_max: self.n_max,
            fd_kappa: self.fd_kappa,
            quad_nodes: self.quad_nodes,
            center: true,
            ..Default::default()
        };
        Ok((ExtensionField::new(curve, data, config)?, omega))
    }

    fn settings(&self) -> CertifySettings {
        CertifySettings {
            spread_bound: self.spread_bound,
            harmonic_trials: self.harmonic_trials,
            mode: self.eval_mode(),
            seed: self.seed,
            ..Default::default()
        }
    }

    /// Echo of the effective configuration, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "curve = {}", self.curve);
        let _ = writeln!(s, "data = {}", self.data);
        let _ = writeln!(s, "modulus = {}", self.modulus);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "levels = {}..{}", self.levels.0, self.levels.1);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "quad_nodes = {}", self.quad_nodes);
        let _ = writeln!(s, "theta_ref = {}", self.theta_ref);
        let _ = writeln!(s, "mac_theta = {}", self.mac_theta);
        let _ = writeln!(s, "fd_kappa = {}", self.fd_kappa);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "spread_bound = {}", self.spread_bound);
        let _ = writeln!(s, "probes = {}", self.probes);
        let _ = writeln!(s, "harmonic_trials = {}", self.harmonic_trials);
        let _ = writeln!(s, "cx_rows = {}", self.cx_rows);
        let _ = writeln!(s, "cx_first = {}", self.cx_first);
        let _ = writeln!(s, "cx_delta_base = {}", self.cx_delta_base);
        let _ = writeln!(s, "cx_lambda_base = {}", self.cx_lambda_base);
        let _ = writeln!(s, "cx_lambda_scale = {}", self.cx_lambda_scale);
        let _ = writeln!(s, "cx_threshold = {}", self.cx_threshold);
        s
    }
}

/// Result of a command: pass flag, summary lines and files relative to the output directory.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub pass: bool,
    pub summary: Vec<String>,
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outcome {
    fn check(&mut self, pass: bool, text: String) {
        self.pass &= pass;
        self.summary.push(format!("{} {text}", if pass { "PASS" } else { "FAIL" }));
    }

    fn file(&mut self, name: impl Into<PathBuf>, body: impl Into<Vec<u8>>) {
        self.files.push((name.into(), body.into()));
    }

    pub fn summary_text(&self) -> String {
        let mut s: String = self.summary.iter().map(|l| format!("{l}\n")).collect();
        let _ = writeln!(s, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }

    /// Process exit status: 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Runs `command` and writes its report files plus `summary.txt` and `config.txt` to `config.out`.
pub fn run(config: &RunConfig, command: Command) -> Result<Outcome, CliError> {
    let mut outcome = execute(config, command)?;
    outcome.file("config.txt", config.to_text());
    outcome.file("summary.txt", outcome.summary_text());
    write_outputs(&config.out, &outcome.files)?;
    Ok(outcome)
}

/// Runs `command` without touching the file system.
pub fn execute(config: &RunConfig, command: Command) -> Result<Outcome, CliError> {
    let mut out = Outcome { pass: true, ..Default::default() };
    out.summary.push(format!("command {}", command.name()));
    match command {
        Command::Counterexample => counterexample(config, &mut out)?,
        Command::Extend => extend(config, &mut out)?,
        Command::Approximate => approximate(config, &mut out)?,
        Command::Certify => certify(config, &mut out)?,
    }
    Ok(out)
}

fn write_outputs(dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Output { path, source }
    };
    for (name, body) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(err(parent))?;
        }
        std::fs::write(&path, body).map_err(err(&path))?;
    }
    Ok(())
}

fn counterexample(cfg: &RunConfig, out: &mut Outcome) -> Result<(), CliError> {
    let omega = cfg.load_modulus()?;
    let ks: Vec<i32> = (0..cfg.cx_rows as i32).map(|i| cfg.cx_first + i).collect();
    let deltas: Vec<f64> = ks.iter().map(|&k| cfg.cx_delta_base.powi(-k)).collect();
    let lambdas: Vec<f64> = ks.iter().map(|&k| cfg.cx_lambda_scale * cfg.cx_lambda_base.powi(k)).collect();
    let report = verify::counterexample_table(&omega, &deltas, &lambdas)?;
    out.file("counterexample.csv", report.to_csv());
    let increasing = report.strictly_increasing();
    let first = report.first_exceeding(cfg.cx_threshold);
    let verdict = if increasing && first.is_some() { "contradiction" } else { "no contradiction" };
    out.check(
        increasing && first.is_some(),
        format!(
            "counterexample ({verdict}): {} rows, strictly increasing {increasing}, max ratio {:.4}, first row above {}: {}",
            report.rows.len(),
            report.max_ratio(),
            cfg.cx_threshold,
            first.map_or("none".to_string(), |l| l.to_string())
        ),
    );
    Ok(())
}

fn extend(cfg: &RunConfig, out: &mut Outcome) -> Result<(), CliError> {
    let (field, omega) = cfg.load_field()?;
    let probes = verify::extension_probes(&field, cfg.probes, cfg.seed);
    let report = verify::certify_extension(&field, &omega, &probes, cfg.fd_kappa)?;
    let mut csv = String::from("# extension probes: columns x, y, z, distance, g0\nx,y,z,distance,g0\n");
    for p in &probes {
        let _ = writeln!(csv, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", p.x, p.y, p.z, field.curve().distance(*p), field.extend_f0(*p));
    }
    out.file("extension_probes.csv", csv);
    let mut consts = String::from("# extension constants: columns kappa, value, gradient, laplacian\nkappa,value,gradient,laplacian\n");
    for c in [report.coarse, report.fine] {
        let _ = writeln!(consts, "{:.12e},{:.12e},{:.12e},{:.12e}", c.kappa, c.value, c.gradient, c.laplacian);
    }
    out.file("extension_constants.csv", consts);
    let (c, f) = (report.coarse, report.fine);
    out.check(
        report.stable,
        format!(
            "extension constants (value, gradient, laplacian) {:.4} {:.4} {:.4} at kappa {} vs {:.4} {:.4} {:.4} at kappa {}",
            c.value, c.gradient, c.laplacian, c.kappa, f.value, f.gradient, f.laplacian, f.kappa
        ),
    );
    out.check(report.band_ok, format!("smoothed distance band d0/d in [{:.4}, {:.4}]", report.band.0, report.band.1));
    Ok(())
}

fn build_levels<'a>(cfg: &RunConfig, builder: &ApproximantBuilder<'a>) -> Result<Vec<HarmonicApproximant>, CliError> {
    (cfg.levels.0..=cfg.levels.1).map(|n| builder.build(n).map_err(CliError::from)).collect()
}

fn approximate(cfg: &RunConfig, out: &mut Outcome) -> Result<(), CliError> {
    let (field, omega) = cfg.load_field()?;
    let builder = ApproximantBuilder::new(&field, &omega, cfg.theta_ref, cfg.seed)?;
    let approximants = build_levels(cfg, &builder)?;
    let mut csv = String::from(
        "# correction charges: columns n, k, cx, cy, cz, gamma, moment, volume, volume_mc, residual\n\
         n,k,cx,cy,cz,gamma,moment,volume,volume_mc,residual\n",
    );
    let mut worst: f64 = 0.0;
    let mut gammas = Vec::new();
    for v in &approximants {
        let l2 = field.regions().cover(v.n - 2).lambda_n;
        for c in &v.charges {
            let r = c.balance_residual(l2, &omega);
            worst = worst.max(r);
            let _ = writeln!(
                csv,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                c.n, c.k, c.center.x, c.center.y, c.center.z, c.gamma, c.moment_beta, c.volume, c.volume_mc, r
            );
        }
        gammas.push(v.max_abs_gamma());
        let dir = format!("level_{}", v.n);
        out.file(format!("{dir}/main.cloud"), v.main.to_text());
        out.file(format!("{dir}/corrections.cloud"), v.corrections.to_text());
        out.file(format!("{dir}/manifest.txt"), v.manifest());
    }
    out.file("charges.csv", csv);
    out.check(worst <= 1e-2, format!("moment balance: max residual {worst:.3e} (bound 1e-2)"));
    let gmax = gammas.iter().cloned().fold(0.0, f64::max);
    let gmin = gammas.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if gmax <= 0.0 { 1.0 } else { gmax / gmin };
    let text: Vec<String> = gammas.iter().map(|g| format!("{g:.4e}")).collect();
    out.check(spread <= 2.0, format!("gamma uniformity: max|gamma| per level {} spread {spread:.3} (bound 2)", text.join(" ")));
    Ok(())
}

fn certify(cfg: &RunConfig, out: &mut Outcome) -> Result<(), CliError> {
    let (field, omega) = cfg.load_field()?;
    let builder = ApproximantBuilder::new(&field, &omega, cfg.theta_ref, cfg.seed)?;
    let approximants = build_levels(cfg, &builder)?;
    let settings = cfg.settings();
    let curve = field.curve();
    let range = verify::data_range(curve, field.data(), settings.curve_samples);
    let direct = verify::certify_direct(&approximants, curve, field.data(), &omega, &settings);
    let gradient = verify::certify_gradient(&approximants, curve, &omega, &settings)?;
    out.file("direct.csv", direct.to_csv());
    out.file("gradient.csv", gradient.scaling.to_csv());
    for r in [&direct, &gradient.scaling] {
        let values: Vec<String> = r.rows.iter().map(|row| format!("{:.4e}", row.normalized)).collect();
        out.check(r.pass, format!("{} scaling: normalized {} spread {:.3} (bound {})", r.quantity, values.join(" "), r.spread, r.bound));
    }
    out.check(gradient.max_principle, format!("maximum principle cross-check (slack {})", verify::MAX_PRINCIPLE_SLACK));

    let mut csv = String::from("# harmonicity: columns n, residual, negative_control\nn,residual,negative_control\n");
    let (mut worst, mut weakest) = (0.0f64, f64::INFINITY);
    for v in &approximants {
        let r = verify::certify_harmonicity(v, curve, cfg.harmonic_trials, range, cfg.seed);
        let neg = verify::harmonicity_negative_control(v, range);
        worst = worst.max(r);
        weakest = weakest.min(neg);
        let _ = writeln!(csv, "{},{:.12e},{:.12e}", v.n, r, neg);
    }
    out.file("harmonicity.csv", csv);
    out.check(worst <= 1e-3, format!("harmonicity: max mean-value residual {worst:.3e} (bound 1e-3)"));
    out.check(weakest > 1e-2, format!("harmonicity negative control: min residual {weakest:.3e} (needs > 1e-2)"));
    Ok(())
}
