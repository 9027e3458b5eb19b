use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use embodied_cli::{run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "embodied",
    version,
    about = "Reliability fields, codebooks, bounds and simulations for sensing-decoded position codes"
)]
struct Args {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one value by dotted path, e.g. `scene.snr_db=15`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Reliability field on a displacement grid and a polar profile.
    Field,
    /// Design (or import) a codebook and verify it.
    Codebook,
    /// Rates and converse bounds over the SNR x L grid.
    Sweep,
    /// Every bound, including the support-constrained one.
    Bounds,
    /// Optimal snapshot counts versus SNR.
    Lstar,
    /// Monte Carlo check of the error bounds.
    Simulate,
}

fn execute(args: Args) -> Result<Vec<PathBuf>, CliError> {
    let mut overrides = args.set;
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &args.out {
        overrides.push(format!(
            "out_dir={}",
            toml::Value::String(out.display().to_string())
        ));
    }
    let cfg = RunConfig::load(args.config.as_deref(), &overrides)?;
    let cmd = match args.command {
        Cmd::Field => Command::Field,
        Cmd::Codebook => Command::Codebook,
        Cmd::Sweep => Command::Sweep,
        Cmd::Bounds => Command::Bounds,
        Cmd::Lstar => Command::Lstar,
        Cmd::Simulate => Command::Simulate,
    };
    run(cmd, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Args::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
