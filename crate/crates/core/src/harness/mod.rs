//! Verification experiments driven by a JSON config, producing
//! self-describing CSV reports.
//!
//! Each experiment returns [`ReportRow`]s whose `pass` flag follows from the
//! row's own `simulated`, `reference`, `tolerance` and `rule` columns.
//! Replicates run on a rayon pool; replicate `r` always draws from stream `r`
//! of a key derived from the master seed, and results are aggregated in
//! replicate order, so reports are byte-identical across thread counts.

mod checks;
mod commands;
mod config;
mod experiments;
mod report;

pub use checks::{
    audit_event, audit_run, dynkin_check, generator_gap_ratio, mean_gap_ratio, AuditCounts,
    DynkinResult,
};
pub use commands::{couple_paths, simulate_snapshots, solve_table};
pub use config::{apportion, spec_for_k, ExperimentConfig, ExperimentKind, HarnessError};
pub use experiments::{
    replicate_means, run_convergence_critical, run_convergence_large, run_coupling,
    run_initial_condition, run_kingman_moments, run_moment_bounds, run_representation,
    run_representation_critical, run_representation_large, run_second_moments,
};
pub use report::{all_pass, read_report, write_report, ReportRow, Rule};

/// Runs `f` on a pool with `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}

/// Validates `cfg` and runs its experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>, HarnessError> {
    cfg.validate()?;
    let kind = cfg
        .experiment
        .ok_or_else(|| HarnessError::Config("missing \"experiment\"".into()))?;
    with_threads(cfg.threads, || match kind {
        ExperimentKind::ConvergenceCritical => run_convergence_critical(cfg),
        ExperimentKind::ConvergenceLarge => run_convergence_large(cfg),
        ExperimentKind::InitialCondition => run_initial_condition(cfg),
        ExperimentKind::Coupling => run_coupling(cfg),
        ExperimentKind::MomentBounds => run_moment_bounds(cfg),
        ExperimentKind::Representation => run_representation(cfg),
    })?
}
