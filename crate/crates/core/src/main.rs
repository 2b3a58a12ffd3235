use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use track_bench::harness::{run_monte_carlo, write_outputs, Execution, RunConfig};
use track_bench::TrackError;

#[derive(Parser)]
#[command(name = "track-bench", version, about = "JPDA / MHT / BP tracking benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of one scenario; writes per-tracker CSVs and summary.csv.
    Run {
        #[arg(long)]
        scenario: Option<u8>,
        /// Comma-separated subset of jpda,mht,bp.
        #[arg(long)]
        trackers: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// key = value file; flags given on the command line win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNS_FAILED: u8 = 2;

fn build_config(
    config: Option<&PathBuf>,
    overrides: &[(&str, Option<String>)],
) -> Result<RunConfig, TrackError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrackError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run { scenario, trackers, runs, seed, workers, config, out } = cli.command;
    let overrides = [
        ("scenario", scenario.map(|v| v.to_string())),
        ("trackers", trackers),
        ("runs", runs.map(|v| v.to_string())),
        ("seed", seed.map(|v| v.to_string())),
        ("workers", workers.map(|v| v.to_string())),
    ];
    let cfg = match build_config(config.as_ref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let result = match run_monte_carlo(&cfg, Execution::from_workers(cfg.workers)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match write_outputs(&result, &out) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    for s in &result.series {
        for (run, msg) in &s.failures {
            eprintln!("{} run {run} failed: {msg}", s.tracker.name());
        }
    }
    if result.failure_rate() > 0.1 {
        eprintln!("more than 10% of runs failed");
        return ExitCode::from(EXIT_RUNS_FAILED);
    }
    ExitCode::SUCCESS
}
