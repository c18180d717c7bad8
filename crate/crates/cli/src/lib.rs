//! Command implementations behind the `isomesh` binary.
//!
//! Every command is a plain function returning [`CliError`], so the
//! integration tests drive the same code paths as the binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use isomesh::Error as CoreError;
use thiserror::Error;

pub use args::{Cli, Command};
pub use commands::run;
pub use config::{FitConfig, OutputSettings};
pub use report::FitReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(String),

    #[error("{stage} stage failed: {source}")]
    Pipeline {
        stage: String,
        #[source]
        source: CoreError,
        /// Directory holding whatever the run produced before failing.
        out: PathBuf,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Pipeline { .. } => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { .. } | CoreError::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// `x` to four significant digits; zero prints as `0.0000`.
pub fn four_significant(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.4}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    // Rounding can carry into a new digit (9.9996 -> 10.000).
    let s = format!("{x:.decimals$}");
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && (rounded.abs().log10().floor() as i32) > magnitude && decimals > 0 {
        let d = decimals - 1;
        return format!("{x:.d$}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(four_significant(0.0), "0.0000");
        assert_eq!(four_significant(0.012345), "0.01235");
        assert_eq!(four_significant(1.5), "1.500");
        assert_eq!(four_significant(123.456), "123.5");
        assert_eq!(four_significant(98765.4), "98765");
        assert_eq!(four_significant(9.99996), "10.00");
    }
}
