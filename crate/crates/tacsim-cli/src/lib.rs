//! Command-line harness around the tactile stack: scenario runs, dataset
//! generation, training and evaluation, the scripted assembly pipeline, and
//! figure-style CSV extraction from episode logs.
//!
//! Everything the binary does lives here as library functions so tests can
//! drive the exact production paths without spawning processes.

pub mod assembly;
pub mod config;
pub mod learncmd;
pub mod logio;
pub mod plotdata;
pub mod probe;
pub mod runs;
pub mod simcmd;

pub use config::{load_config, CliError, CliResult};
