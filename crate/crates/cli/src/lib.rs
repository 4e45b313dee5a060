//! Batch front end: configuration, experiment commands and CSV output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use commands::Command;
pub use config::{parse_config, RunConfig};

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub paper_defaults: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub fn load_config(o: &Overrides) -> Result<RunConfig> {
    let text = match &o.config {
        Some(path) => {
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
        }
        None if o.paper_defaults => String::new(),
        None => anyhow::bail!("either --config or --paper-defaults is required"),
    };
    let mut config = parse_config(&text, o.paper_defaults)?;
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(dir) = &o.out_dir {
        config.output_path = dir.clone();
    }
    Ok(config)
}

/// Runs one command and writes its files under the configured output path.
pub fn execute(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    let outputs = commands::run(command, config)?;
    outputs.commit(Path::new(&config.output_path))
}
