use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod run;

use run::{Mode, Overrides};

#[derive(Parser)]
#[command(name = "isoshift", version, about = "Verify commuting-isometry models, invariant-subspace factorizations and Toeplitz-algebra equivalences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a JSON spec and report every check.
    Run {
        spec: PathBuf,
        /// Truncation degree per variable (overrides the spec).
        #[arg(long)]
        trunc: Option<usize>,
        /// One tolerance for every residual class (overrides the spec).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report instead of the text summary.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { spec, trunc, tol, seed, mode, out, json } = cli.command;
    let result = run::configure_threads(std::env::var("ISOSHIFT_THREADS").ok())
        .and_then(|_| run::load(&spec))
        .and_then(|s| run::run(&s, &Overrides { trunc, tol, seed, mode }));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("isoshift: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let report = outcome.report;
    let text = report.to_json();
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, format!("{text}\n")) {
            eprintln!("isoshift: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if json {
        println!("{text}");
    } else {
        print!("{}", report.render_text());
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
