//! One module per command; each returns an [`Outcome`] without touching disk.

mod dirac;
mod equilibrium;
mod hardy;
mod measure;
mod nogo;

use twotime_core::parallel::Execution;

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::output::Outcome;

pub fn run(config: &RunConfig, command: Command, execution: Execution) -> Result<Outcome, CliError> {
    match command {
        Command::Hardy => hardy::run(config, execution),
        Command::Equilibrium => equilibrium::run(config, execution),
        Command::Nogo => nogo::run(config),
        Command::Dirac => dirac::run(config, execution),
        Command::Measure => measure::run(config),
    }
}
