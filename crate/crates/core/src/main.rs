use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nonlocal_kpz::harness::{run_experiment, ExperimentConfig, ExperimentOutcome, EXPERIMENTS};

#[derive(Parser)]
#[command(name = "nonlocal-kpz", version, about = "Nonlocal KPZ experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSVs and verdicts.
    Run {
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the property suite.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiment ids.
    List,
}

fn load(path: Option<&PathBuf>) -> nonlocal_kpz::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(
    id: &str,
    config: Option<&PathBuf>,
    out: Option<&PathBuf>,
) -> nonlocal_kpz::Result<ExperimentOutcome> {
    let cfg = load(config)?;
    let outcome = run_experiment(id, &cfg)?;
    if let Some(dir) = out {
        outcome.write_to(dir)?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::List => {
            for (id, summary) in EXPERIMENTS {
                println!("{id:<24} {summary}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run { id, config, out } => execute(id, config.as_ref(), Some(out)),
        Command::Check { config, out } => execute("property-suite", config.as_ref(), out.as_ref()),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.verdict_lines());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
