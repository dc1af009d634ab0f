//! Command-line driver: `run`, `bench`, `privacy` and `comm`.

mod commands;
mod config;

pub use commands::{
    cmd_bench, cmd_comm, cmd_privacy, cmd_run, format_units, perturb, CommRow, Dataset, IntervalAggregate,
};
pub use config::{
    parse_sigma_scale, BenchConfig, CommConfig, NoiseConfig, Overrides, PrivacyConfig, ResolvedSeeds, RunConfig, Seeds,
};

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "smartagg",
    version,
    about = "Privacy-preserving smart-meter aggregation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one aggregation round per interval.
    Run,
    /// Time each entity's computation across key sizes.
    Bench,
    /// Normalized conditional entropy across noise levels.
    Privacy,
    /// Frame sizes, transmission times and minimum bandwidth.
    Comm,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// TOML config file.
    #[arg(long, global = true, env = "SMARTAGG_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "M")]
    pub meters: Option<usize>,
    #[arg(long, global = true, value_name = "B")]
    pub key_bits: Option<u32>,
    #[arg(long, global = true, value_name = "N")]
    pub intervals: Option<usize>,
    /// Noise multiplier such as 1/3 or 6.
    #[arg(long, global = true, value_name = "S")]
    pub sigma_scale: Option<String>,
    /// Master seed in hex.
    #[arg(long, global = true, value_name = "HEX")]
    pub seed: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Reading CSV to use instead of synthetic profiles.
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            meters: self.meters,
            key_bits: self.key_bits,
            intervals: self.intervals,
            sigma_scale: self.sigma_scale.clone(),
            seed: self.seed.clone(),
            out: self.out.clone(),
            data: self.data.clone(),
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    match cli.command {
        Command::Run => cmd_run(&cfg).map(drop),
        Command::Bench => cmd_bench(&cfg).map(drop),
        Command::Privacy => cmd_privacy(&cfg).map(drop),
        Command::Comm => cmd_comm(&cfg).map(drop),
    }
}

/// Parses `args`, runs the command and maps failure to a nonzero exit.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
