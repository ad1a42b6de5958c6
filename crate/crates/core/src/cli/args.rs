//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::commands::{cmd_evaluate, cmd_fit, cmd_phantom, cmd_prep, cmd_report, cmd_segment, cmd_train, parse_split};
use super::config::{load_config, Overrides};
use super::exit_code;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "meniscus",
    version,
    about = "Meniscus segmentation and UTE relaxometry pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration (defaults when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory of the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Network width multiplier.
    #[arg(long, global = true)]
    pub width_mult: Option<f64>,
    /// Probability threshold for binarising predictions.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom cohort.
    Phantom {
        #[arg(long)]
        subjects: Option<usize>,
    },
    /// Re-prepare the network input slices of a dataset in place.
    Prep {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a network on the train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Pretrained weight container for the first two encoder stages.
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Predict meniscus masks.
    Segment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Fit T1, T1rho and T2* maps.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Segmentation directories whose masks extend the fitted region.
        #[arg(long)]
        segmentation: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Fit every voxel instead of the mask union.
        #[arg(long)]
        whole_volume: bool,
    },
    /// Compare ground truth and segmentations.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        segmentation: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Render plots and summary tables of an evaluation.
    Report {
        #[arg(long)]
        eval: PathBuf,
    },
}

fn need_out(out: &Option<PathBuf>) -> Result<&PathBuf> {
    out.as_ref()
        .ok_or_else(|| Error::Config("--out DIR is required for this command".into()))
}

/// Resolves the configuration and runs the parsed command.
pub fn execute(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let mut overrides = Overrides {
        seed: g.seed,
        width_mult: g.width_mult,
        threshold: g.threshold,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Phantom { subjects } => overrides.subjects = *subjects,
        Command::Train { max_epochs, .. } => overrides.max_epochs = *max_epochs,
        _ => {}
    }
    let cfg = load_config(g.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Phantom { .. } => cmd_phantom(&cfg, need_out(&g.out)?),
        Command::Prep { data } => cmd_prep(&cfg, data),
        Command::Train { data, pretrained, .. } => cmd_train(&cfg, data, need_out(&g.out)?, pretrained.as_deref()),
        Command::Segment { data, model, split } => {
            cmd_segment(&cfg, data, model, need_out(&g.out)?, parse_split(split)?)
        }
        Command::Fit {
            data,
            segmentation,
            split,
            whole_volume,
        } => cmd_fit(
            &cfg,
            data,
            need_out(&g.out)?,
            parse_split(split)?,
            segmentation,
            *whole_volume,
        ),
        Command::Evaluate {
            data,
            maps,
            segmentation,
            split,
        } => cmd_evaluate(&cfg, data, maps, segmentation, need_out(&g.out)?, parse_split(split)?),
        Command::Report { eval } => cmd_report(&cfg, eval, need_out(&g.out)?),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 data, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
