//! Experiment harness for soft-robust policy optimization: TOML configs,
//! posterior construction, λ/α sweeps, evaluation and file formats.

pub mod config;
mod error;
pub mod harness;
pub mod io;

pub use error::{at_startup as error_at_startup, HarnessError, Result};
