use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use asaukit_cli::commands::{cmd_compare, cmd_curves, cmd_gradcheck, cmd_sweep};
use asaukit_cli::config::resolve;
use asaukit_cli::{thread_cap, CliError, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// ASAU curves against their exact max targets, one CSV per family.
    Curves,
    /// Analytic-versus-numeric gradient suites.
    Gradcheck,
    /// Train one model per activation and tabulate test metrics.
    Compare,
    /// Sup error of ASAU against max(ax, bx) as beta grows.
    Sweep,
}

/// Adaptive smooth activation experiments.
#[derive(Debug, Parser)]
#[command(name = "asaukit", version)]
struct Args {
    command: Command,
    /// JSON config; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `asaukit-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `dotted.key=value`, value parsed as JSON when possible. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: Args) -> Result<bool, CliError> {
    if let Some(n) = thread_cap(std::env::var("ASAUKIT_THREADS").ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    let text = match &args.config {
        Some(p) => {
            Some(std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?)
        }
        None => None,
    };
    let cfg = resolve(text.as_deref(), &args.overrides, args.seed, args.out)?;
    let outcome = match args.command {
        Command::Curves => cmd_curves(&cfg)?,
        Command::Gradcheck => cmd_gradcheck(&cfg)?,
        Command::Compare => cmd_compare(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
    };
    print!("{}", outcome.summary);
    if !outcome.summary.ends_with('\n') {
        println!();
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let start = Instant::now();
    let code = match run(args) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("asaukit: {e}");
            e.exit_code()
        }
    };
    eprintln!("elapsed {:.2} s", start.elapsed().as_secs_f64());
    ExitCode::from(code)
}
