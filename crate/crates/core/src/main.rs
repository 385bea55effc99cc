use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diffrx::cli::{execute, exit_code, Command, RunConfig};
use diffrx::{Error, Result};

#[derive(Parser)]
#[command(name = "diffrx", version, about = "Diffusion-model receiver experiments")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run an experiment: `diffrx run [OPTIONS] <COMMAND> [key=value ...]`.
    ///
    /// COMMAND is one of train-swissroll, train-link, snr-sweep, hwi-sweep,
    /// snapshot-grid, gradcheck. It may also be set in the config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// The command name and/or dotted key=value overrides.
        args: Vec<String>,
    },
    /// Print the full default configuration.
    Defaults,
}

fn run(config: Option<PathBuf>, output_dir: Option<PathBuf>, seed: Option<u64>, args: Vec<String>) -> Result<()> {
    let (overrides, names): (Vec<String>, Vec<String>) = args.into_iter().partition(|a| a.contains('='));
    if names.len() > 1 {
        return Err(Error::Config(format!("expected one command, got {}", names.join(" "))));
    }
    let mut cfg = RunConfig::load(config.as_deref(), &overrides)?;
    if let Some(name) = names.first() {
        cfg.command = Some(Command::parse(name)?);
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let command = cfg
        .command
        .ok_or_else(|| Error::Config("no command given".into()))?;
    for path in execute(&cfg, command)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.action {
        Action::Run {
            config,
            output_dir,
            seed,
            args,
        } => run(config, output_dir, seed, args),
        Action::Defaults => RunConfig::default().to_toml().map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
