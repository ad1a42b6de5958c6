//! Pipeline front end: run configuration, provenance, subcommand stages,
//! SVG plots and (with the `cli` feature) argument parsing.

#[cfg(feature = "cli")]
pub mod args;
pub mod commands;
pub mod config;
pub mod plot;
pub mod provenance;

pub use commands::{
    cmd_evaluate, cmd_fit, cmd_phantom, cmd_prep, cmd_report, cmd_segment, cmd_train, parse_split, segment_volume,
    training_pairs, Dataset,
};
pub use config::{load_config, Overrides, RunConfig};

use crate::error::Error;

/// Process exit code of an error: 1 usage/configuration, 3 numerical
/// failure, 2 any other data problem.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::NonFinite(_) | Error::Numerical(_) => 3,
        _ => 2,
    }
}
