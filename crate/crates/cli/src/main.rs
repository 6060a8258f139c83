use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tvcs_cli::{parse_config, print_trace_summary, run_experiment, CliError};

/// TV-regularized compressive-sensing reconstruction experiments.
#[derive(Debug, Parser)]
#[command(name = "tvcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a `key = value` config file.
    Run {
        config: PathBuf,
        /// Where artifacts are written (default: `output_dir` from the config, else `tvcs-output`).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Experiment seed; takes precedence over TVCS_SEED and the config file.
        #[arg(long, env = "TVCS_SEED")]
        seed: Option<u64>,
    },
    /// Print the first, decile and last rows of a trace CSV.
    Trace { csv: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
        } => {
            let text = fs::read_to_string(&config).map_err(|e| {
                CliError::Validation(format!("cannot read config {}: {e}", config.display()))
            })?;
            let mut spec = parse_config(&text)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let dir = output_dir
                .or_else(|| spec.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("tvcs-output"));
            let report = run_experiment(&spec, &dir)?;
            for r in &report.rows {
                println!(
                    "{:<6} mu={} RE={:.2}% objective={:.4} iters={} time={:.2}s",
                    r.solver, r.mu, r.re_percent, r.objective, r.iters, r.wall_seconds
                );
            }
            println!("artifacts written to {}", report.output_dir.display());
        }
        Command::Trace { csv } => print!("{}", print_trace_summary(&csv)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
