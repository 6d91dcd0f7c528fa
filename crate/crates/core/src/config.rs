//! Run configuration: command-line flags over an optional `key=value` file over
//! built-in defaults.
//!
//! The file takes the long flag names without the leading dashes, one pair per
//! line; `#` starts a comment.
//!
//! ```text
//! # three-day synthetic run
//! mode = run
//! synth-days = 3
//! epsilon1 = 0.5
//! ```

use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, CommandFactory, Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::dp_noise::NoiseMode;
use crate::metering::LoadProfile;

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_SWEEP: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.0];
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DAYS: usize = 3;
pub const DEFAULT_METERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Run,
    MaeSweep,
    BillError,
    Convergence,
    CoopTable,
    BaselineCompare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::MaeSweep => "mae-sweep",
            Mode::BillError => "bill-error",
            Mode::Convergence => "convergence",
            Mode::CoopTable => "coop-table",
            Mode::BaselineCompare => "baseline-compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Laplace,
    Off,
}

impl From<NoiseArg> for NoiseMode {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Laplace => NoiseMode::Laplace,
            NoiseArg::Off => NoiseMode::Off,
        }
    }
}

/// Differentially private smart-meter reporting and incentivized peak billing.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "drdp", version)]
struct Flags {
    /// key=value file with defaults for any of the flags below
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// CSV of true readings with header `meter_id,slot,wh`
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Synthesize this many days of readings (default when no --input)
    #[arg(long, value_name = "DAYS")]
    synth_days: Option<usize>,
    #[arg(long, value_name = "N")]
    meters: Option<usize>,
    /// Meter-side privacy budget
    #[arg(long)]
    epsilon1: Option<f64>,
    /// Grid-side privacy budget
    #[arg(long)]
    epsilon2: Option<f64>,
    /// Budgets for the sweep modes, comma separated
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    epsilons: Option<Vec<f64>>,
    #[arg(long = "delta-f1")]
    delta_f1: Option<f64>,
    #[arg(long = "delta-f2")]
    delta_f2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Regional peak threshold in Wh per slot
    #[arg(long)]
    peak_factor: Option<f64>,
    /// Off-peak price in cents per Wh
    #[arg(long)]
    unit_price: Option<f64>,
    /// Peak price in cents per Wh
    #[arg(long)]
    peak_price: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// `off` runs both stages in the zero-noise limit
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Meter tracked by the convergence mode (default: first meter)
    #[arg(long)]
    meter_id: Option<u32>,
    #[arg(long)]
    base_wh: Option<f64>,
    #[arg(long)]
    morning_wh: Option<f64>,
    #[arg(long)]
    evening_wh: Option<f64>,
    #[arg(long)]
    jitter_wh: Option<f64>,
    #[arg(long)]
    cooperative_homes: Option<usize>,
}

macro_rules! overlay {
    ($top:expr, $bottom:expr, $($field:ident),+ $(,)?) => {
        Flags { $($field: $top.$field.or($bottom.$field),)+ }
    };
}

impl Flags {
    fn over(self, file: Flags) -> Flags {
        overlay!(
            self,
            file,
            config,
            mode,
            input,
            synth_days,
            meters,
            epsilon1,
            epsilon2,
            epsilons,
            delta_f1,
            delta_f2,
            mu,
            peak_factor,
            unit_price,
            peak_price,
            seed,
            out,
            noise,
            meter_id,
            base_wh,
            morning_wh,
            evening_wh,
            jitter_wh,
            cooperative_homes,
        )
    }

    fn has_synth_settings(&self) -> bool {
        self.synth_days.is_some()
            || self.meters.is_some()
            || self.base_wh.is_some()
            || self.morning_wh.is_some()
            || self.evening_wh.is_some()
            || self.jitter_wh.is_some()
            || self.cooperative_homes.is_some()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    /// `--help` or `--version`; the text is for stdout.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_meters: usize,
    pub n_days: usize,
    pub profile: LoadProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub n_meters: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub epsilons: Vec<f64>,
    pub delta_f1: f64,
    pub delta_f2: f64,
    pub mu: f64,
    pub peak_factor: f64,
    pub unit_price: f64,
    pub peak_price: f64,
    pub noise: NoiseMode,
    pub meter_id: Option<u32>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        resolve(Flags::default()).expect("defaults are valid")
    }
}

fn clap_error(err: clap::Error) -> ConfigError {
    match err.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            ConfigError::Help(err.render().to_string())
        }
        _ => ConfigError::Usage(err.render().to_string()),
    }
}

fn read_config_file(path: &Path) -> Result<Flags, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigError::Invalid(format!("reading config file {}: {e}", path.display()))
    })?;
    parse_config_text(&text, path)
}

fn parse_config_text(text: &str, path: &Path) -> Result<Flags, ConfigError> {
    let mut args = vec!["drdp".to_string()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError::Invalid(format!(
                "{}:{}: expected key=value, found `{line}`",
                path.display(),
                n + 1
            ))
        })?;
        let key = key.trim();
        if key == "config" {
            return Err(ConfigError::Invalid(format!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                n + 1
            )));
        }
        args.push(format!("--{key}"));
        args.push(value.trim().to_string());
    }
    Flags::try_parse_from(args).map_err(|e| match e.kind() {
        ErrorKind::UnknownArgument => {
            ConfigError::Usage(format!("{}: {}", path.display(), e.render()))
        }
        _ => clap_error(e),
    })
}

/// Parses command-line arguments (including the program name) into a resolved config.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = Flags::try_parse_from(argv).map_err(clap_error)?;
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => Flags::default(),
    };
    resolve(flags.over(file))
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::Invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn resolve(f: Flags) -> Result<RunConfig, ConfigError> {
    if f.input.is_some() && f.has_synth_settings() {
        return Err(ConfigError::Invalid(
            "--input conflicts with synthetic-data settings (--synth-days, --meters, profile flags); choose one source".into(),
        ));
    }

    let n_meters = f.meters.unwrap_or(DEFAULT_METERS);
    if n_meters == 0 {
        return Err(ConfigError::Invalid("--meters must be at least 1".into()));
    }
    let synth = match f.input {
        Some(_) => None,
        None => {
            let n_days = f.synth_days.unwrap_or(DEFAULT_DAYS);
            if n_days == 0 {
                return Err(ConfigError::Invalid(
                    "--synth-days must be at least 1".into(),
                ));
            }
            let d = LoadProfile::default();
            Some(SynthConfig {
                n_meters,
                n_days,
                profile: LoadProfile {
                    base_wh: f.base_wh.unwrap_or(d.base_wh),
                    morning_amp_wh: f.morning_wh.unwrap_or(d.morning_amp_wh),
                    evening_amp_wh: f.evening_wh.unwrap_or(d.evening_amp_wh),
                    jitter_wh: f.jitter_wh.unwrap_or(d.jitter_wh),
                    cooperative_homes: f.cooperative_homes.unwrap_or(d.cooperative_homes),
                    ..d
                },
            })
        }
    };

    let epsilon1 = positive("epsilon1", f.epsilon1.unwrap_or(DEFAULT_EPSILON))?;
    let epsilon2 = positive("epsilon2", f.epsilon2.unwrap_or(DEFAULT_EPSILON))?;
    let mut epsilons = f.epsilons.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    if epsilons.is_empty() {
        return Err(ConfigError::Invalid(
            "--epsilons needs at least one value".into(),
        ));
    }
    for &e in &epsilons {
        positive("epsilons", e)?;
    }
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();

    let mu = f.mu.unwrap_or(0.0);
    if !mu.is_finite() {
        return Err(ConfigError::Invalid(format!("mu must be finite, got {mu}")));
    }
    let unit_price = positive("unit-price", f.unit_price.unwrap_or(10.0))?;
    let peak_price = positive("peak-price", f.peak_price.unwrap_or(25.0))?;
    let mut warnings = Vec::new();
    if peak_price <= unit_price {
        warnings.push(format!(
            "peak price {peak_price} does not exceed unit price {unit_price}; cooperating homes earn no discount"
        ));
    }

    Ok(RunConfig {
        mode: f.mode.unwrap_or_default(),
        input: f.input,
        synth,
        n_meters,
        epsilon1,
        epsilon2,
        epsilons,
        delta_f1: positive("delta-f1", f.delta_f1.unwrap_or(1.0))?,
        delta_f2: positive("delta-f2", f.delta_f2.unwrap_or(1.0))?,
        mu,
        peak_factor: positive("peak-factor", f.peak_factor.unwrap_or(12_000.0))?,
        unit_price,
        peak_price,
        noise: f.noise.map_or(NoiseMode::Laplace, NoiseMode::from),
        meter_id: f.meter_id,
        seed: f.seed.unwrap_or(DEFAULT_SEED),
        output_dir: f.out.unwrap_or_else(|| PathBuf::from("drdp-out")),
        warnings,
    })
}

pub fn usage() -> String {
    Flags::command().render_help().to_string()
}
