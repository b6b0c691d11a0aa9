use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coalcoag::harness::{
    all_pass, couple_paths, run_experiment, simulate_snapshots, solve_table, with_threads,
    write_report, ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "coalcoag", version, about = "Structured coalescent and coagulation verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the coalescent and write configuration snapshots.
    Simulate(Common),
    /// Solve the limiting equations and write the solution table.
    Solve(Common),
    /// Simulate coupled Kingman paths.
    Couple(Common),
    /// Run the configured experiment and write the report.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.model.seed = Some(s);
        }
        if let Some(n) = self.threads {
            cfg.threads = Some(n);
        }
        Ok(cfg)
    }

    fn writer(&self) -> Result<BufWriter<File>, HarnessError> {
        Ok(BufWriter::new(File::create(&self.out)?))
    }
}

fn run(cmd: &Command) -> Result<bool, HarnessError> {
    match cmd {
        Command::Simulate(a) => {
            let cfg = a.load()?;
            let out = a.writer()?;
            with_threads(cfg.threads, || simulate_snapshots(&cfg, out))?
        }
        Command::Solve(a) => {
            let cfg = a.load()?;
            solve_table(&cfg, a.writer()?)?;
            Ok(true)
        }
        Command::Couple(a) => {
            let cfg = a.load()?;
            let out = a.writer()?;
            with_threads(cfg.threads, || couple_paths(&cfg, out))?
        }
        Command::Verify(a) => {
            let cfg = a.load()?;
            let rows = run_experiment(&cfg)?;
            write_report(&rows, a.writer()?)?;
            let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
            for r in &failed {
                eprintln!(
                    "FAIL {} K={:?} t={:?} colony={:?} {}: simulated {} reference {} tolerance {}",
                    r.experiment, r.k, r.t, r.colony, r.observable, r.simulated, r.reference, r.tolerance
                );
            }
            println!("{} rows, {} failed", rows.len(), failed.len());
            Ok(all_pass(&rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
