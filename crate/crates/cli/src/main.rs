use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use twotime_cli::{commands, parse_config, CliError, Command, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK};
use twotime_core::parallel::Execution;

/// Multitime Bohmian trajectory laboratory.
///
/// Worker threads follow RAYON_NUM_THREADS; results do not depend on it.
#[derive(Debug, Parser)]
#[command(name = "twotime", version)]
struct Cli {
    command: Command,
    /// TOML scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Synchronization offset t_b − t_a.
    #[arg(long, allow_hyphen_values = true)]
    h: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Turn failed checks into exit status 1.
    #[arg(long)]
    check: bool,
}

fn execute(cli: &Cli) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| CliError::io(&cli.config, e))?;
    let mut config = parse_config(&text)?;
    config.command = Some(cli.command);
    config.h = cli.h.unwrap_or(config.h);
    config.n = cli.n.unwrap_or(config.n);
    config.seed = cli.seed.unwrap_or(config.seed);
    config.out = cli.out.clone().unwrap_or(config.out);
    config.check |= cli.check;
    config.validate()?;

    let started = Instant::now();
    let outcome = commands::run(&config, cli.command, Execution::Parallel)?;
    outcome.write(&config.out)?;
    eprintln!("{} finished in {:.2} s; output in {}", cli.command, started.elapsed().as_secs_f64(), config.out.display());
    for c in &outcome.summary.checks {
        eprintln!("  [{}] {}: {:.6e} ({})", if c.passed { "pass" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    Ok(if config.check && !outcome.summary.passed() { EXIT_CHECK_FAILED } else { EXIT_OK })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
