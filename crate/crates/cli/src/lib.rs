//! The `dualev` command-line tool: generate data, train, calibrate,
//! evaluate, infer and export, with every artifact tied to the
//! configuration hash that produced it.

pub mod args;
pub mod commands;
pub mod config;
pub mod exit;
pub mod image_io;

pub use args::Cli;
pub use config::ExperimentConfig;
pub use exit::{CliError, ExitKind};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let config = config.resolve(cli.seed, cli.output_dir.clone())?;
    commands::Runner::new(config, cli.allow_mismatch).run(&cli.command)
}
