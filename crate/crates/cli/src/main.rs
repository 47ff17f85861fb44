//! `pann`: toggle simulation, power models, quantization and budget search
//! from the command line.
//!
//! Exit codes: 0 on success, 1 when an analysis gate fails (including an
//! infeasible power budget), 2 on invalid input.

mod commands;
mod manifest;

use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Process-level failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn gate(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::input(format!("{}: {e}", path.display()))
    }
}

impl From<pann::Error> for CliError {
    fn from(e: pann::Error) -> Self {
        match e {
            pann::Error::InfeasibleBudget { .. } => CliError::gate(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Inclusive integer range written as `A..B` (or a single `A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitRange {
    pub start: u32,
    pub end: u32,
}

impl BitRange {
    pub fn range(&self) -> RangeInclusive<u32> {
        self.start..=self.end
    }

    pub fn values(&self) -> Vec<u32> {
        self.range().collect()
    }
}

fn parse_range(s: &str) -> Result<BitRange, String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("'{t}': {e}"));
    let (start, end) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if start == 0 || start > end || end > 32 {
        return Err(format!("range {s} must satisfy 1 ≤ start ≤ end ≤ 32"));
    }
    Ok(BitRange { start, end })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultArg {
    Booth,
    Serial,
}

impl From<MultArg> for pann::MultiplierKind {
    fn from(m: MultArg) -> Self {
        match m {
            MultArg::Booth => pann::MultiplierKind::BoothRadix2,
            MultArg::Serial => pann::MultiplierKind::SerialShiftAdd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistArg {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Pann,
    Ruq,
    UnsignedSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    PerNeuron,
    PerLayer,
}

impl From<ScopeArg> for pann::quantize::GammaScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerNeuron => pann::quantize::GammaScope::PerNeuron,
            ScopeArg::PerLayer => pann::quantize::GammaScope::PerLayer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Val,
    Test,
}

impl SplitArg {
    pub fn file_name(&self) -> &'static str {
        match self {
            SplitArg::Val => "val.csv",
            SplitArg::Test => "test.csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveArg {
    Ratio,
}

#[derive(Debug, Parser)]
#[command(name = "pann", version, about = "Bit-toggle power models and power-aware quantization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a MAC stream and compare per-component toggles with the model.
    Simulate(SimulateArgs),
    /// Sweep widths and gate simulated toggles against the closed-form model.
    ValidateModels(ValidateArgs),
    /// Quantize a model (power-aware, uniform, or unsigned split).
    Quantize(QuantizeArgs),
    /// Quantization-error curves.
    Mse(MseArgs),
    /// Find the most accurate activation width at a fixed power budget.
    BudgetSearch(BudgetSearchArgs),
    /// Tabulate every feasible configuration at a fixed power budget.
    Tradeoff(TradeoffArgs),
    /// Re-run the command recorded in a run manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = MultArg::Booth)]
    pub mult: MultArg,
    #[arg(long, default_value_t = 4)]
    pub bw: u32,
    #[arg(long, default_value_t = 4)]
    pub bx: u32,
    /// Accumulator width.
    #[arg(long = "B", default_value_t = 32)]
    pub acc_width: u32,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub signed: bool,
    #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
    pub dist: DistArg,
    #[arg(long, default_value_t = 36_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long, value_parser = parse_range, default_value = "2..8")]
    pub bits: BitRange,
    #[arg(long = "B", default_value_t = 32)]
    pub acc_width: u32,
    #[arg(long, value_enum, default_value_t = MultArg::Booth)]
    pub mult: MultArg,
    #[arg(long, default_value_t = 36_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Power budget per element (power-aware mode).
    #[arg(long)]
    pub budget: Option<f64>,
    /// Activation width for the power-aware mode; chosen by the error model when omitted.
    #[arg(long)]
    pub bx: Option<u32>,
    /// Candidate activation widths when `--bx` is omitted.
    #[arg(long, value_parser = parse_range, default_value = "2..8")]
    pub brange: BitRange,
    /// Bit width of the uniform mode (weights and activations).
    #[arg(long)]
    pub bits: Option<u32>,
    /// Directory holding calib.csv (needed by the power-aware and uniform modes).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub calib_samples: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScopeArg::PerNeuron)]
    pub scope: ScopeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MseArgs {
    #[arg(long, value_enum, default_value_t = CurveArg::Ratio)]
    pub curve: CurveArg,
    #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
    pub dist: DistArg,
    #[arg(long, value_parser = parse_range, default_value = "2..8")]
    pub bits: BitRange,
    /// Dot-product length.
    #[arg(long)]
    pub d: Option<usize>,
    /// Monte-Carlo trials per configuration (Gaussian curve).
    #[arg(long, default_value_t = 2_000)]
    pub trials: usize,
    /// Required for the simulated (Gaussian) curve.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalDataArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory holding calib.csv, val.csv and test.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    #[arg(long)]
    pub budget: f64,
    #[arg(long, value_parser = parse_range, default_value = "2..8")]
    pub brange: BitRange,
    /// Selects the calibration subset.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub calib_samples: usize,
    #[arg(long, value_enum, default_value_t = ScopeArg::PerNeuron)]
    pub scope: ScopeArg,
    #[arg(long = "B", default_value_t = 32)]
    pub acc_width: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BudgetSearchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalDataArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TradeoffArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: EvalDataArgs,
    #[arg(long)]
    pub baseline_bits: u32,
}

fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, argv),
        Command::ValidateModels(a) => commands::validate_models(&a, argv),
        Command::Quantize(a) => commands::quantize(&a, argv),
        Command::Mse(a) => commands::mse(&a, argv),
        Command::BudgetSearch(a) => commands::budget_search(&a, argv),
        Command::Tradeoff(a) => commands::tradeoff(&a, argv),
        Command::Replay { manifest } => {
            let m = manifest::RunManifest::load(&manifest)?;
            if m.tool_version != env!("CARGO_PKG_VERSION") {
                eprintln!(
                    "warning: manifest was written by version {}, this is {}",
                    m.tool_version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            let full: Vec<String> = std::iter::once("pann".to_string()).chain(m.argv.iter().cloned()).collect();
            let cli = Cli::try_parse_from(&full).map_err(|e| CliError::input(format!("manifest argv: {e}")))?;
            if matches!(cli.command, Command::Replay { .. }) {
                return Err(CliError::input("a manifest cannot replay another replay"));
            }
            run(cli, &m.argv)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..8").unwrap(), BitRange { start: 2, end: 8 });
        assert_eq!(parse_range("2..=8").unwrap(), BitRange { start: 2, end: 8 });
        assert_eq!(parse_range("5").unwrap().values(), vec![5]);
        assert!(parse_range("8..2").is_err());
        assert!(parse_range("0..2").is_err());
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
