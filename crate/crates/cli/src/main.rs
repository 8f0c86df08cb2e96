use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use tvgarch_core::io::Format;

#[derive(Debug, Parser)]
#[command(name = "tvgarch", version, about = "Time-varying AR(2)-AGARCH(1,1) toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV (date column plus one or two price columns).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Break dates, one ISO date per line; overrides configured dates.
    #[arg(long)]
    dates: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl Common {
    fn format(&self, from_config: Option<Format>) -> Format {
        match self.format {
            Some(FormatArg::Csv) => Format::Csv,
            Some(FormatArg::Json) => Format::Json,
            None => from_config.unwrap_or_default(),
        }
    }

    fn output_dir(&self, from_config: Option<&str>) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| from_config.map(PathBuf::from))
            .unwrap_or_else(|| Path::new(".").to_path_buf())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo paths of the AR(2)-AGARCH(1,1) process with breaks.
    Simulate(Common),
    /// ξ weights and expected ς products by horizon.
    Solve(Common),
    /// Mean and variance predictors with their mean square errors.
    Forecast(Common),
    /// Time-varying autocorrelations of the mean process.
    Acf(Common),
    /// Unconditional variance path across the breaks.
    Uncond(Common),
    /// QML fit of GJR-GARCH, with break dummies when dates are given.
    Fit(Common),
    /// QML fit of the sign-regime GARCH model.
    FitRegime(Common),
    /// Two-stage QML fit of the bivariate UEDCC-AGARCH model.
    FitBiv(Common),
    /// Variance-break scan.
    Breaks(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Solve(c) => commands::solve(c),
        Command::Forecast(c) => commands::forecast(c),
        Command::Acf(c) => commands::acf(c),
        Command::Uncond(c) => commands::uncond(c),
        Command::Fit(c) => commands::fit(c),
        Command::FitRegime(c) => commands::fit_regime(c),
        Command::FitBiv(c) => commands::fit_biv(c),
        Command::Breaks(c) => commands::breaks(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
