use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tripod_cli::{execute, load_config, Command, Overrides};

/// Tripod-atom geometric gate simulations.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the Hadamard parameter set; the config file overrides it.
    #[arg(long)]
    paper_defaults: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let overrides = Overrides {
        config: args.config,
        paper_defaults: args.paper_defaults,
        seed: args.seed,
        out_dir: args.out_dir,
    };
    let result = load_config(&overrides).and_then(|c| execute(args.command, &c));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
