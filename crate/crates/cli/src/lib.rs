//! Library half of the `ordsum` command-line tool. The binary stays a thin
//! argument-parsing shell; everything testable lives here.

pub mod analyze;
pub mod error;
pub mod ingest;
pub mod report;
pub mod simulate_cmd;
pub mod tables;

use std::path::PathBuf;

/// Environment variable naming the default directory for output files.
pub const OUTPUT_DIR_ENV: &str = "ORDSUM_OUTPUT_DIR";

/// Default output directory: `$ORDSUM_OUTPUT_DIR`, else the working
/// directory.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}
