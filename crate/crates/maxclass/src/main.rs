use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use maxclass::report::render;
use maxclass::{run, CliError, Command, Invocation, EXIT_INPUT};

/// Invariants of rank-2 distributions of maximal class.
#[derive(Debug, Parser)]
#[command(name = "maxclass", version)]
struct Args {
    command: Command,
    /// TOML job file.
    #[arg(long)]
    job: Option<PathBuf>,
    /// Seed for every sampled quantity; overrides the job's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving `<command>.json` and, for profiles, `<command>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dimension of the model for `verify-model`.
    #[arg(long)]
    n: Option<usize>,
}

fn write_outputs(dir: &PathBuf, name: &str, json: &str, csv: Option<&str>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::input("io", format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(format!("{name}.json")), json).map_err(io)?;
    if let Some(csv) = csv {
        std::fs::write(dir.join(format!("{name}.csv")), csv).map_err(io)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let inv = Invocation {
        command: args.command,
        job: args.job,
        seed: args.seed,
        out: args.out,
        n: args.n,
    };
    let outcome = match run(&inv) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit);
        }
    };
    let json = render(&outcome.json);
    match &inv.out {
        Some(dir) => {
            if let Err(e) = write_outputs(dir, inv.command.name(), &json, outcome.csv.as_deref()) {
                eprintln!("{e}");
                return ExitCode::from(e.exit);
            }
        }
        None => print!("{json}"),
    }
    ExitCode::from(outcome.exit)
}
