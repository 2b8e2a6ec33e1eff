use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resetdf_cli::commands::{self, Overrides};
use resetdf_cli::CliError;

#[derive(Parser)]
#[command(name = "resetdf", version, about = "Describing-function analysis, tuning and simulation of reset controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Harmonic frequency responses of an element or loop.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Comma-separated harmonic orders, e.g. 1,3,5.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(1..))]
        orders: Option<Vec<u32>>,
        /// Frequency grid in Hz: fmin,fmax,points.
        #[arg(long, value_parser = commands::parse_grid)]
        grid: Option<(f64, f64, usize)>,
    },
    /// CgLp reset-gain enumeration and selection.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop tracking simulations with RMS error prediction.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check analytic harmonics against the simulator.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(1..))]
        orders: Option<Vec<u32>>,
        #[arg(long, hide = true, default_value_t = 1.0)]
        perturb_theta: f64,
    },
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (manifest, out) = match cli.command {
        Command::Analyze {
            config,
            common,
            orders,
            grid,
        } => {
            let out = common.out.unwrap_or_else(|| commands::default_out("analyze"));
            (commands::cmd_analyze(&config, &out, &Overrides { orders, grid })?, out)
        }
        Command::Tune { config, common } => {
            let out = common.out.unwrap_or_else(|| commands::default_out("tune"));
            (commands::cmd_tune(&config, &out)?, out)
        }
        Command::Simulate { config, common } => {
            let out = common.out.unwrap_or_else(|| commands::default_out("simulate"));
            (commands::cmd_simulate(&config, &out)?, out)
        }
        Command::Validate {
            common,
            orders,
            perturb_theta,
        } => {
            let out = common.out.unwrap_or_else(|| commands::default_out("validate"));
            let ov = Overrides { orders, grid: None };
            (commands::cmd_validate(&out, &ov, perturb_theta)?, out)
        }
    };
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            println!("outputs written to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
