use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use phasefront_cli::config::Overrides;
use phasefront_cli::{run, Invocation, Scenario};

#[derive(Parser, Debug)]
#[command(name = "phasefront", version, about = "Run a phase-space experiment and write its artifacts")]
struct Args {
    scenario: Scenario,
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for randomized probes.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid half-width.
    #[arg(long = "L")]
    half_width: Option<f64>,
    /// Grid size.
    #[arg(long = "N")]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        scenario: args.scenario,
        config: args.config,
        out: args.out,
        overrides: Overrides {
            seed: args.seed,
            half_width: args.half_width,
            n: args.n,
        },
    };
    match run(&inv) {
        Ok(manifest) => {
            println!("{} {:?}: {}", inv.scenario, manifest.status, inv.out.display());
            ExitCode::from(manifest.status.exit_code())
        }
        Err(e) => {
            eprintln!("phasefront {}: {e}", inv.scenario);
            ExitCode::from(e.exit_code())
        }
    }
}
