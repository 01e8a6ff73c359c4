//! Configuration, execution and serialization behind the `twotime` binary.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_config, Command, RunConfig};
pub use error::CliError;
pub use output::{Check, Outcome, RunSummary};

/// Exit status when every enabled check passed (or checks were off).
pub const EXIT_OK: u8 = 0;
/// Exit status when an enabled check failed.
pub const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status for configuration, I/O and numerical errors.
pub const EXIT_ERROR: u8 = 2;
