//! Command-line front-end: CSV ingestion, `key=value` configuration,
//! report emission and the `test`, `ci`, `mtest`, `simulate` and `generate`
//! commands.
//!
//! Exit codes: 0 success, 1 input/schema/usage error, 2 infeasible program,
//! 3 no sign change inside the interval bracket, 4 other numerical failure.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

use clap::Parser;

use args::{Cli, Command};
use error::{exit, CliError, CliResult};

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Test(a) => commands::emit_report(&a.out, &commands::cmd_test(a)?),
        Command::Ci(a) => commands::emit_report(&a.out, &commands::cmd_ci(a)?),
        Command::Mtest(a) => commands::emit_report(&a.out, &commands::cmd_mtest(a)?),
        Command::Simulate(a) => commands::emit_table(&a.out, &commands::cmd_simulate(a, cli.threads)?),
        Command::Generate(a) => {
            let (report, panel) = commands::cmd_generate(a)?;
            commands::write_generated(a, &report, &panel)
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Runs the program on `argv` (including the program name) and returns the
/// exit code. Errors go to standard error as `error[CODE]: message`.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}
