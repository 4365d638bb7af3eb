use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracsource::commands;
use fracsource::error::CliError;
use fracsource::ExperimentConfig;

/// Forward synthesis and inversion experiments for fractional diffusion
/// sources on the unit disc.
#[derive(Debug, Parser)]
#[command(name = "fracsource", version)]
struct Cli {
    /// Experiment configuration (TOML); every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed; overrides `noise.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the list of written files.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Export the eigensystem below `spectrum.lambda_max`.
    Spectrum,
    /// Synthesize the two sensor traces (and noisy copies, Laplace samples).
    Synth,
    /// Reconstruct order, change points and mode coefficients from traces.
    Invert {
        /// Exactly two `t,flux` files, sensor 1 then sensor 2. Defaults to
        /// the synthesized traces in the output directory.
        #[arg(long, num_args = 1..)]
        traces: Option<Vec<PathBuf>>,
    },
    /// Run the identity and oracle checks; exit 3 when one fails.
    Verify,
    /// Emit plot-ready tables from a completed run directory.
    Plotdata {
        /// Run directory holding synth and invert outputs. Defaults to the
        /// output directory.
        run: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    let out = commands::out_dir(&cfg, cli.out.as_deref());
    match cli.command {
        Command::Spectrum => commands::cmd_spectrum(&cfg, &out),
        Command::Synth => commands::cmd_synth(&cfg, &out),
        Command::Invert { traces } => commands::cmd_invert(&cfg, &out, traces.as_deref()),
        Command::Verify => commands::cmd_verify(&cfg, &out),
        Command::Plotdata { run } => {
            let run = run.unwrap_or_else(|| out.clone());
            commands::cmd_plotdata(&run, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = cli.quiet;
    match run(cli) {
        Ok(paths) => {
            if !quiet {
                for p in paths {
                    println!("{}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fracsource: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
