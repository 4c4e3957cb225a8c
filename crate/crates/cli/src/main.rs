use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eccgame::commands;
use eccgame::{CliError, Overrides, Scenario, Scheme, SweepParameter};

/// Edge/cloud compute market experiments.
#[derive(Parser)]
#[command(name = "eccgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Override the scheme: olsec, ssec or fixed-controls.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario's scheme; writes trajectory.csv and summary.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form equilibrium and stability data under the initial requests.
    Ess {
        #[command(flatten)]
        common: Common,
    },
    /// OLSEC against SSEC over a list of learning rates.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of R_c, p_c or tau_x.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Defaults to the scenario's sweep block for the parameter.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<Scenario, CliError> {
    let scheme = common.scheme.as_deref().map(str::parse::<Scheme>).transpose()?;
    Scenario::load(
        &common.scenario,
        Overrides {
            dt: common.dt,
            horizon: common.horizon,
            scheme,
        },
    )
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, out } => {
            let summary = commands::simulate(&load(&common)?, &out)?;
            print_json(&summary)
        }
        Command::Ess { common } => print_json(&commands::ess(&load(&common)?)),
        Command::Compare { common, deltas, out } => {
            let rows = commands::compare(&load(&common)?, &deltas)?;
            if let Some(path) = out {
                commands::write_compare(&path, &rows)?;
            }
            print_json(&rows)
        }
        Command::Sweep {
            common,
            param,
            values,
            out,
        } => {
            let scenario = load(&common)?;
            let parameter: SweepParameter = param.parse()?;
            let values = match values {
                Some(v) => v,
                None => scenario.sweep_values(parameter).unwrap_or_default().to_vec(),
            };
            let rows = commands::sweep(&scenario, parameter, &values)?;
            match out {
                Some(path) => commands::write_sweep(std::fs::File::create(path)?, &rows),
                None => commands::write_sweep(std::io::stdout().lock(), &rows),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eccgame: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
