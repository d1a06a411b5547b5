use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use interwave_cli::config::{parse_raw, RawConfig};
use interwave_cli::{run_continue, run_single, validate, RunConfig, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};

#[derive(Parser)]
#[command(name = "interwave", version, about = "Branch continuation for two-layer interfacial waves with a vortex pair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Continuation direction in the vortex strength, `+` or `-`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    direction: Option<String>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Seed for the randomized checks of `validate`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Continue the branch from the trivial solution.
    Continue,
    /// Solve once at `[continuation] eps`.
    SingleSolve,
    /// Run the built-in invariant checks.
    Validate,
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut raw: RawConfig = parse_raw(&text).map_err(|e| e.to_string())?;
    if let Some(d) = &cli.direction {
        raw.continuation.direction = d.clone();
    }
    if let Some(n) = cli.max_steps {
        raw.continuation.max_steps = n;
    }
    if let Some(out) = &cli.out {
        raw.output.dir = Some(out.display().to_string());
    }
    RunConfig::from_raw(raw).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let code = match cli.command {
        Command::Validate => {
            let checks = validate::run_checks(&cfg.physical, cli.seed);
            match validate::report(&checks, &mut std::io::stdout()) {
                Ok(true) => EXIT_OK,
                Ok(false) => EXIT_NUMERICAL,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_NUMERICAL
                }
            }
        }
        mode => {
            let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("interwave-out"));
            let result = if mode == Command::Continue {
                run_continue(&cfg, &out)
            } else {
                run_single(&cfg, &out)
            };
            match result {
                Ok(outcome) => {
                    if outcome.exit_code == EXIT_OK {
                        println!("{}", outcome.message);
                    } else {
                        eprintln!("{}", outcome.message);
                    }
                    println!("wrote {}", out.display());
                    outcome.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
