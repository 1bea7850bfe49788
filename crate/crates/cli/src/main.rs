//! `emep`: run seeded EM-EP Monte Carlo sweeps and write CSV.
//!
//! Exit codes: 0 clean, 1 completed with flagged rows (or a failed self
//! test), 2 configuration or usage error, 3 I/O failure while writing output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emep_core::experiment::{parse_config, report_convergence, run_experiment, ExperimentConfig, ExperimentError};

#[derive(Parser)]
#[command(name = "emep", version, about = "EM-EP clustered-sparse channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write one CSV row per (algorithm, sweep point, trial).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; defaults to the config's output_path, then results.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write per-EM-iteration convergence traces for a single sweep point.
    Converge {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check the closed-form updates against the brute-force oracles.
    Selftest,
}

const EXIT_FLAGGED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn load_config(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })?;
    parse_config(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ExperimentError::Config(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_IO),
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn create(path: &Path) -> Result<BufWriter<File>, ExitCode> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, trials: Option<usize>, jobs: Option<usize>) -> ExitCode {
    let mut cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let path = out.or_else(|| cfg.output_path.clone()).unwrap_or_else(|| PathBuf::from("results.csv"));
    let output = match run_experiment(&cfg, jobs.unwrap_or_else(default_jobs)) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let writer = match create(&path) {
        Ok(w) => w,
        Err(code) => return code,
    };
    if let Err(e) = output.write_csv(writer) {
        return fail(e);
    }
    print!("{output}");
    let flagged = output.flagged();
    if flagged > 0 {
        eprintln!("{flagged} row(s) flagged; see error_flag in {}", path.display());
        ExitCode::from(EXIT_FLAGGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn converge(config: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> ExitCode {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let report = match report_convergence(&cfg, jobs.unwrap_or_else(default_jobs)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let written = match out {
        Some(path) => match create(&path) {
            Ok(w) => report.write_csv(w),
            Err(code) => return code,
        },
        None => report.write_csv(io::stdout().lock()),
    };
    if let Err(e) = written {
        return fail(e);
    }
    if report.flagged() > 0 {
        ExitCode::from(EXIT_FLAGGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn selftest() -> ExitCode {
    let checks = emep_core::selftest::run_selftest();
    let mut stdout = io::stdout().lock();
    for c in &checks {
        let _ = writeln!(stdout, "{c}");
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FLAGGED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed, trials, jobs } => run(&config, out, seed, trials, jobs),
        Command::Converge { config, out, jobs } => converge(&config, out, jobs),
        Command::Selftest => selftest(),
    }
}
