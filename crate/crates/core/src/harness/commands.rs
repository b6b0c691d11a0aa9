//! Raw-output commands: snapshots, solver tables and coupled paths.

use std::io;

use rayon::prelude::*;

use super::checks::{audit_event, AuditCounts};
use super::config::{ExperimentConfig, HarnessError};
use crate::coag::{solve_discrete_at, solve_laplace_exponent_at, write_exponents};
use crate::coalescent::{init_state, Observation};
use crate::kingman::coupled_simulate;
use crate::model::{validate_params, Regime};
use crate::rng::{derive_seed, replicate_rng};

const TAG_SIMULATE: u64 = 101;
const TAG_COUPLE: u64 = 102;

/// Simulates `replicates` coalescents and writes
/// `replicate,t,colony,config,count` at every observation time. Returns
/// whether every event passed the invariant audit.
pub fn simulate_snapshots<W: io::Write>(cfg: &ExperimentConfig, out: W) -> Result<bool, HarnessError> {
    let p = validate_params(&cfg.model)?;
    let times = cfg.sorted_times();
    let seed = derive_seed(cfg.seed(), TAG_SIMULATE);
    let runs: Vec<(Vec<[String; 5]>, AuditCounts)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut s = init_state(&p);
            let mut audit = AuditCounts::default();
            let mut rows = Vec::new();
            for &t in &times {
                let mut prev = s.total_blocks();
                s.simulate_until_observed(&p, t, &mut rng, |obs| match obs {
                    Observation::Hold { state, .. } => prev = state.total_blocks(),
                    Observation::Jump { state, event } => {
                        audit = audit.merge(&audit_event(prev, state, event, &p));
                        prev = state.total_blocks();
                    }
                });
                for (i, colony) in s.colonies.iter().enumerate() {
                    for (config, count) in colony.counts() {
                        rows.push([r.to_string(), t.to_string(), i.to_string(), config.encode(), count.to_string()]);
                    }
                }
            }
            (rows, audit)
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "t", "colony", "config", "count"])?;
    let mut ok = true;
    for (rows, audit) in runs {
        ok &= audit.clean();
        for row in rows {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(ok)
}

/// Critical regime: the discrete solution `t,colony,n,u` on the lattice
/// `|n|_1 <= max_norm`. Large regime: Laplace exponents `t,colony,lambda,v`
/// over the lambda grid.
pub fn solve_table<W: io::Write>(cfg: &ExperimentConfig, out: W) -> Result<(), HarnessError> {
    let p = validate_params(&cfg.model)?;
    let mut times = cfg.sorted_times();
    if times[0] > 0.0 {
        times.insert(0, 0.0);
    }
    match p.regime {
        Regime::Critical => solve_discrete_at(&p, &times, cfg.max_norm, cfg.dt)?.write_csv(out)?,
        Regime::Large => {
            let paths = cfg
                .lambdas()
                .iter()
                .map(|lam| solve_laplace_exponent_at(&p, lam, &times, cfg.dt))
                .collect::<Result<Vec<_>, _>>()?;
            write_exponents(&paths, out)?;
        }
    }
    Ok(())
}

/// Coupled paths `replicate,t,lhat,l_total,ltilde` up to the unscaled horizon
/// `max(times)`. Returns whether the ordering held on every record.
pub fn couple_paths<W: io::Write>(cfg: &ExperimentConfig, out: W) -> Result<bool, HarnessError> {
    let p = validate_params(&cfg.model)?;
    let horizon = cfg.sorted_times().last().copied().unwrap_or(1.0);
    let seed = derive_seed(cfg.seed(), TAG_COUPLE);
    let paths: Vec<_> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| coupled_simulate(&p, horizon, &mut replicate_rng(seed, r)))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "t", "lhat", "l_total", "ltilde"])?;
    let mut ok = true;
    for (r, path) in paths.iter().enumerate() {
        ok &= path.first_violation().is_none();
        for rec in &path.records {
            w.write_record([
                r.to_string(),
                rec.time.to_string(),
                rec.lhat.to_string(),
                rec.l_total().to_string(),
                rec.ltilde.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(ok)
}
