//! Library side of the `rfdeg` command: run configuration, pair manifests and
//! the subcommand implementations.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::RunConfig;
pub use manifest::{Manifest, ManifestRow};

use rfdeg_core::ErrorKind;

/// Process exit code for a failed command.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}
