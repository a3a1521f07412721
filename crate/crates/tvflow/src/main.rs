//! Command-line front end.
//!
//! Exit codes: `0` success (for `verify`, every check passed or was
//! inconclusive), `1` usage or configuration errors, `2` runtime failures
//! (solver divergence, I/O), `3` a completed verification with at least
//! one failed check.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvflow::commands::{cmd_analytic, cmd_solve, cmd_sweep, cmd_verify};
use tvflow::config::{parse_config, RunConfig, CONFIG_REFERENCE};

#[derive(Parser)]
#[command(
    name = "tvflow",
    version,
    about = "Total variation flow with a nonlocal Kirchhoff coefficient",
    after_long_help = CONFIG_REFERENCE
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured flow; write diagnostics, snapshots, and a summary
    Solve(RunArgs),
    /// Sample the closed-form radial solution, no solver run
    Analytic(RunArgs),
    /// Run the flow and check it against closed forms and structural bounds
    Verify(RunArgs),
    /// Re-run the flow once per value of the swept key
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (`key = value` lines; see --help)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out` key
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Solve(a) | Command::Analytic(a) | Command::Verify(a) | Command::Sweep(a) => a,
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here with non-error kinds; keep their
            // conventional exit 0 and route real usage errors to 1.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let args = cli.command.args();
    let cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(1);
        }
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out));

    let result = match &cli.command {
        Command::Solve(_) => cmd_solve(&cfg, &out).map(|()| true),
        Command::Analytic(_) => cmd_analytic(&cfg, &out).map(|()| true),
        Command::Verify(_) => cmd_verify(&cfg, &out),
        Command::Sweep(_) => cmd_sweep(&cfg, &out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!(
                "verification failed; see {}",
                out.join("report.csv").display()
            );
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
