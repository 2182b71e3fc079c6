//! The `twrn` command-line interface.
//!
//! Exit codes: 0 success, 1 failed validation, 2 usage or configuration
//! error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ConfigError, EnergyUnits, NetworkConfig};
use crate::markov::Mode;
use crate::metrics::MetricsError;
use crate::optimizer::{
    config_for_snr, crossing_rate, evaluate_point, optimal_rate, sweep, EbVariant, McBudget, MetricSource, Objective,
    OptimalRateReport, OptimizerError, RateGrid, Spacing, SweepPoint, SweepSpec, DEFAULT_OPT_STEPS, DEFAULT_RATE_MAX,
    DEFAULT_RATE_MIN, DEFAULT_REFINE_TOL,
};
use crate::output::{write_csv, OutputRecord};
use crate::simulator::{run_replications, SimError, SimOptions, SimResult};
use crate::validation::{validate, ValidationError, ValidationSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// SNR used when neither `--config` nor `--snr-db` fixes the powers.
pub const DEFAULT_SNR_DB: f64 = 10.0;
pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Parser)]
#[command(name = "twrn", version, about = "Goodput and bit-energy analysis of AF/DF two-way relay networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Network configuration (JSON); defaults to the reference setup.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Comma-separated equal-power SNRs in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true, value_name = "LIST")]
    pub snr_db: Vec<f64>,
    /// Report energies with the bandwidth factor set to one.
    #[arg(long, global = true)]
    pub paper_units: bool,
    /// Interpret `noise_power` as a density and multiply by the bandwidth.
    #[arg(long, global = true)]
    pub noise_is_psd: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Master seed; defaults to the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replications (results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Af,
    Df,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Af => Mode::Af,
            ModeArg::Df => Mode::Df,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EbVariantArg {
    Paper,
    Renewal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpacingArg {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    MaxGoodput,
    MinEb,
}

#[derive(Debug, Args)]
pub struct Budget {
    /// AF rounds per replication.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub rounds: u64,
    /// DF slots per replication.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
}

impl Budget {
    fn per_rep(&self, mode: Mode) -> u64 {
        match mode {
            Mode::Af => self.rounds,
            Mode::Df => self.slots,
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub rate_min: Option<f64>,
    #[arg(long)]
    pub rate_max: Option<f64>,
    #[arg(long)]
    pub rate_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub spacing: Option<SpacingArg>,
}

impl GridArgs {
    fn grid(&self, steps: usize, spacing: SpacingArg) -> Result<RateGrid, CliError> {
        let spacing = match self.spacing.unwrap_or(spacing) {
            SpacingArg::Linear => Spacing::Linear,
            SpacingArg::Log => Spacing::Log,
        };
        Ok(RateGrid::new(
            self.rate_min.unwrap_or(DEFAULT_RATE_MIN),
            self.rate_max.unwrap_or(DEFAULT_RATE_MAX),
            self.rate_steps.unwrap_or(steps),
            spacing,
        )?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic metrics at one rate.
    Analyze {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        rate: f64,
    },
    /// Monte Carlo protocol simulation at one rate.
    Simulate {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        rate: f64,
        #[command(flatten)]
        budget: Budget,
        /// Record per-codeword attempt counts (AF).
        #[arg(long)]
        track_attempts: bool,
    },
    /// Metrics over a rate grid for each SNR.
    Sweep {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Explicit comma-separated rates; overrides the grid flags.
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SourceArg::Analytic)]
        source: SourceArg,
        #[command(flatten)]
        budget: Budget,
    },
    /// Goodput-maximizing or energy-minimizing rate for each SNR.
    Optimize {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::MaxGoodput)]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value_t = EbVariantArg::Renewal)]
        eb_variant: EbVariantArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value_t = SourceArg::Analytic)]
        source: SourceArg,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, default_value_t = DEFAULT_REFINE_TOL)]
        refine_tol: f64,
    },
    /// Cross-check analytic metrics against simulation (JSON report).
    Validate {
        /// Restrict to one mode; both by default.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4,8")]
        rates: Vec<f64>,
        #[command(flatten)]
        budget: Budget,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("failed to write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Config(c) => CliError::Config(c),
            MetricsError::UndefinedRate(_) => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::InvalidSpec(s) => CliError::Usage(s),
            OptimizerError::NoFeasibleRate => CliError::Numerical(e.to_string()),
            OptimizerError::Metrics(m) => m.into(),
            OptimizerError::Sim(s) => s.into(),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Invalid(s) => CliError::Usage(s),
            ValidationError::Metrics(m) => m.into(),
            ValidationError::Sim(s) => s.into(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    record: &'a OutputRecord,
    sim_result: &'a SimResult,
}

#[derive(Serialize)]
struct OptimizeEntry<'a> {
    #[serde(flatten)]
    report: &'a OptimalRateReport,
    /// Smallest rate in the grid range where DF goodput overtakes AF.
    crossing_rate: Option<f64>,
}

fn load_config(common: &Common) -> Result<NetworkConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => NetworkConfig::load(path)?,
        None => NetworkConfig::reference(DEFAULT_SNR_DB),
    };
    if common.noise_is_psd {
        cfg = cfg.with_noise_as_psd();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_rate(rate: f64) -> Result<f64, CliError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(rate)
    } else {
        Err(CliError::Usage(format!("rate must be positive and finite, got {rate}")))
    }
}

fn snr_entries(common: &Common) -> Vec<Option<f64>> {
    if common.snr_db.is_empty() {
        vec![None]
    } else {
        common.snr_db.iter().copied().map(Some).collect()
    }
}

fn units(common: &Common) -> EnergyUnits {
    if common.paper_units {
        EnergyUnits::PaperNormalized
    } else {
        EnergyUnits::Joules
    }
}

fn source(arg: SourceArg, budget: &Budget, mode: Mode, cfg: &NetworkConfig, workers: Option<usize>) -> MetricSource {
    match arg {
        SourceArg::Analytic => MetricSource::Analytic,
        SourceArg::Mc => MetricSource::MonteCarlo(McBudget {
            per_rep: budget.per_rep(mode),
            reps: budget.reps,
            seed: cfg.seed,
            workers,
        }),
    }
}

fn records_of(points: &[SweepPoint], mode: Mode) -> Vec<OutputRecord> {
    points
        .iter()
        .map(|p| OutputRecord::from_point(p.snr_db, mode, &p.analytic, p.empirical.as_ref()))
        .collect()
}

fn emit_records(out: &mut dyn Write, format: Format, records: &[OutputRecord]) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(out, records)?,
        Format::Json => emit_json(out, &records)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Runs one command, writing its primary output to `out`. Returns the exit
/// code on success (0, or 1 for a failed validation).
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let common = &cli.common;
    let cfg = load_config(common)?;
    let units = units(common);
    match &cli.command {
        Command::Analyze { mode, rate } => {
            let mode = Mode::from(*mode);
            let rate = check_rate(*rate)?;
            let records = snr_entries(common)
                .into_iter()
                .map(|snr| {
                    let (c, db) = config_for_snr(&cfg, snr);
                    let pt = evaluate_point(&c, db, mode, rate, &MetricSource::Analytic, units)?;
                    Ok(OutputRecord::from_point(db, mode, &pt.analytic, None))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            emit_records(out, common.format, &records)?;
        }
        Command::Simulate {
            mode,
            rate,
            budget,
            track_attempts,
        } => {
            let mode = Mode::from(*mode);
            let rate = check_rate(*rate)?;
            if common.snr_db.len() > 1 {
                return Err(CliError::Usage("simulate takes at most one --snr-db value".into()));
            }
            let (c, db) = config_for_snr(&cfg, common.snr_db.first().copied());
            let opts = SimOptions {
                units,
                workers: common.workers,
                track_attempts: *track_attempts,
            };
            let sim = run_replications(&c, mode, rate, budget.per_rep(mode), budget.reps, c.seed, &opts)?;
            let pt = crate::metrics::analyze_point(&c, mode, rate, units)?;
            let record = OutputRecord::from_point(db, mode, &pt, Some(&sim));
            match common.format {
                Format::Csv => write_csv(out, std::slice::from_ref(&record))?,
                Format::Json => emit_json(
                    out,
                    &SimulateOutput {
                        record: &record,
                        sim_result: &sim,
                    },
                )?,
            }
        }
        Command::Sweep {
            mode,
            grid,
            rates,
            source: src,
            budget,
        } => {
            let mode = Mode::from(*mode);
            let source = source(*src, budget, mode, &cfg, common.workers);
            let points = if rates.is_empty() {
                let spec = SweepSpec {
                    mode,
                    grid: grid.grid(100, SpacingArg::Linear)?,
                    snr_db: common.snr_db.clone(),
                    source,
                    eb_variant: EbVariant::Renewal,
                    refine_tol: DEFAULT_REFINE_TOL,
                    units,
                };
                sweep(&cfg, &spec)?
            } else {
                let mut pts = Vec::new();
                for snr in snr_entries(common) {
                    let (c, db) = config_for_snr(&cfg, snr);
                    for &r in rates {
                        pts.push(evaluate_point(&c, db, mode, check_rate(r)?, &source, units)?);
                    }
                }
                pts
            };
            emit_records(out, common.format, &records_of(&points, mode))?;
        }
        Command::Optimize {
            mode,
            objective,
            eb_variant,
            grid,
            source: src,
            budget,
            refine_tol,
        } => {
            let mode = Mode::from(*mode);
            let grid = grid.grid(DEFAULT_OPT_STEPS, SpacingArg::Log)?;
            let spec = SweepSpec {
                mode,
                grid: grid.clone(),
                snr_db: common.snr_db.clone(),
                source: source(*src, budget, mode, &cfg, common.workers),
                eb_variant: match eb_variant {
                    EbVariantArg::Paper => EbVariant::Paper,
                    EbVariantArg::Renewal => EbVariant::Renewal,
                },
                refine_tol: *refine_tol,
                units,
            };
            let objective = match objective {
                ObjectiveArg::MaxGoodput => Objective::MaxGoodput,
                ObjectiveArg::MinEb => Objective::MinEb,
            };
            let reports = optimal_rate(&cfg, &spec, objective)?;
            match common.format {
                Format::Json => {
                    let crossings = reports
                        .iter()
                        .map(|r| crossing_rate(&cfg, r.snr_db, &grid, *refine_tol))
                        .collect::<Result<Vec<_>, _>>()?;
                    let entries: Vec<OptimizeEntry> = reports
                        .iter()
                        .zip(crossings)
                        .map(|(report, crossing_rate)| OptimizeEntry { report, crossing_rate })
                        .collect();
                    emit_json(out, &entries)?;
                }
                Format::Csv => {
                    let records = reports
                        .iter()
                        .map(|r| {
                            let (c, db) = config_for_snr(&cfg, Some(r.snr_db));
                            let pt = evaluate_point(&c, db, mode, r.rate, &spec.source, units)?;
                            Ok(OutputRecord::from_point(db, mode, &pt.analytic, pt.empirical.as_ref()))
                        })
                        .collect::<Result<Vec<_>, CliError>>()?;
                    write_csv(out, &records)?;
                }
            }
        }
        Command::Validate { mode, rates, budget } => {
            for &r in rates {
                check_rate(r)?;
            }
            let reference = ValidationSpec::reference(cfg.seed);
            let spec = ValidationSpec {
                snr_db: if common.snr_db.is_empty() {
                    reference.snr_db
                } else {
                    common.snr_db.clone()
                },
                rates: rates.clone(),
                modes: match mode {
                    Some(m) => vec![Mode::from(*m)],
                    None => vec![Mode::Af, Mode::Df],
                },
                rounds: budget.rounds,
                slots: budget.slots,
                reps: budget.reps,
                seed: cfg.seed,
                units,
                workers: common.workers,
            };
            let report = validate(&cfg, &spec)?;
            match common.format {
                Format::Json => emit_json(out, &report)?,
                Format::Csv => {
                    let records: Vec<OutputRecord> = report
                        .points
                        .iter()
                        .map(|p| OutputRecord::from_point(p.snr_db, p.mode, &p.analytic, Some(&p.empirical)))
                        .collect();
                    write_csv(out, &records)?;
                }
            }
            if !report.passed {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args`, runs the command and returns the process exit code.
/// Diagnostics go to `err`; command output goes to `out` or `--output`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut buf = Vec::new();
    let result = execute(&cli, &mut buf).and_then(|code| {
        match &cli.common.output {
            Some(path) => std::fs::write(path, &buf)?,
            None => out.write_all(&buf)?,
        }
        Ok(code)
    });
    match result {
        Ok(code) => {
            if code == EXIT_VALIDATION {
                let _ = writeln!(err, "twrn: validation failed");
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "twrn: {e}");
            e.exit_code()
        }
    }
}
