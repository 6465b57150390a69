use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rdstab::{commands, exit_code, AppConfig, ConfigError, Overrides};
use rdstab_core::control::QuadRule;

#[derive(Parser)]
#[command(
    name = "rdstab",
    version,
    about = "Predictor-feedback stabilization of reaction-diffusion PDEs with uncertain input delay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Force w ≡ 0.
    #[arg(long, global = true)]
    open_loop: bool,

    /// Time step in seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Number of modes to compute and simulate.
    #[arg(long, global = true)]
    modes: Option<usize>,

    /// Predictor quadrature rule: left or trapezoid.
    #[arg(long, global = true)]
    rule: Option<QuadRule>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and eigenfunctions of the spatial operator.
    Eig,
    /// Small-gain certificate for the configured design.
    Certify,
    /// Closed-loop (or open-loop) simulation.
    Simulate,
    /// Simulations over a grid of delay amplitudes.
    Sweep {
        /// Comma-separated δ values; defaults to the config's [sweep] or 0..0.6.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .ok_or_else(|| ConfigError::Syntax("--config <path> is required".into()))?;
    let mut config = AppConfig::load(&path)?;
    config.apply(&Overrides {
        open_loop: cli.open_loop,
        dt: cli.dt,
        modes: cli.modes,
        rule: cli.rule,
    })?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("cannot create {}", cli.out_dir.display()))?;
    let manifest = match cli.command {
        Command::Eig => commands::eig(&config, &cli.out_dir)?,
        Command::Certify => commands::certify(&config, &cli.out_dir)?,
        Command::Simulate => commands::simulate(&config, &cli.out_dir)?,
        Command::Sweep { deltas } => commands::sweep(&config, &cli.out_dir, deltas)?,
    };
    for path in &manifest.outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
