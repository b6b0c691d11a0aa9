//! Per-event invariant audits and generator checks on simulated paths.

use rayon::prelude::*;

use crate::coalescent::{
    evaluate_generator, evaluate_limit_generator, init_state, mono_poly_split, to_empirical,
    CoalescentState, CylinderFunction, Event, EventKind, Observation,
};
use crate::model::ModelParams;
use crate::rng::{replicate_rng, SimRng};
use crate::stats::MeanEstimate;

/// Number of events that broke each invariant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditCounts {
    pub events: u64,
    pub color_mass: u64,
    pub block_count: u64,
    pub additivity: u64,
    pub mono_split: u64,
}

impl AuditCounts {
    pub fn merge(&self, o: &AuditCounts) -> AuditCounts {
        AuditCounts {
            events: self.events + o.events,
            color_mass: self.color_mass + o.color_mass,
            block_count: self.block_count + o.block_count,
            additivity: self.additivity + o.additivity,
            mono_split: self.mono_split + o.mono_split,
        }
    }

    pub fn clean(&self) -> bool {
        self.color_mass == 0 && self.block_count == 0 && self.additivity == 0 && self.mono_split == 0
    }
}

/// Checks one jump given the block count before it.
pub fn audit_event(prev_blocks: usize, s: &CoalescentState, event: &Event, p: &ModelParams) -> AuditCounts {
    let mut a = AuditCounts {
        events: 1,
        ..Default::default()
    };
    if s.check_invariants().is_err() {
        a.color_mass = 1;
    }
    let total = s.total_blocks();
    match &event.kind {
        EventKind::Migration { .. } => {
            if total != prev_blocks {
                a.block_count = 1;
            }
        }
        EventKind::Coalescence { colony, first, second } => {
            if total + 1 != prev_blocks {
                a.block_count = 1;
            }
            let c = &s.colonies[*colony];
            let merged = first.add(second);
            if c.block_count() == 0 || c.block(c.block_count() - 1) != merged.0.as_slice() {
                a.additivity = 1;
            }
        }
    }
    let lambda: Vec<f64> = (1..=p.d).map(|x| x as f64).collect();
    let mu = to_empirical(s, p);
    let (mono, poly) = mono_poly_split(s, p);
    for i in 0..p.d {
        let whole = mu[i].linear_functional(&lambda);
        let parts = mono[i].linear_functional(&lambda) + poly[i].linear_functional(&lambda);
        if (whole - parts).abs() > 1e-12 * whole.abs().max(1.0) {
            a.mono_split = 1;
        }
    }
    a
}

/// Simulates from the initial state to rescaled time `t_scaled`, auditing
/// every event.
pub fn audit_run(p: &ModelParams, t_scaled: f64, rng: &mut SimRng) -> AuditCounts {
    let mut s = init_state(p);
    let mut prev = s.total_blocks();
    let mut counts = AuditCounts::default();
    s.simulate_until_observed(p, t_scaled, rng, |obs| match obs {
        Observation::Hold { state, .. } => prev = state.total_blocks(),
        Observation::Jump { state, event } => {
            counts = counts.merge(&audit_event(prev, state, event, p));
            prev = state.total_blocks();
        }
    });
    counts
}

/// Outcome of a Dynkin-formula check for `H` over `[0, t]`.
#[derive(Debug, Clone, Copy)]
pub struct DynkinResult {
    pub h0: f64,
    pub mean_ht: MeanEstimate,
    pub mean_integral: MeanEstimate,
    /// Per-replicate `H(mu(t)) - H(mu(0)) - int_0^t A^K H(mu(s)) ds`.
    pub discrepancy: MeanEstimate,
}

impl DynkinResult {
    /// `|mean discrepancy| <= z * SE`.
    pub fn within(&self, z: f64) -> bool {
        self.discrepancy.mean.abs() <= z * self.discrepancy.std_error
    }
}

/// Estimates both sides of `E[H(mu(t))] - H(mu(0)) = E int_0^t A^K H(mu(s)) ds`,
/// integrating the generator exactly over the holding intervals.
pub fn dynkin_check(p: &ModelParams, h: &CylinderFunction, t_scaled: f64, replicates: usize, seed: u64) -> DynkinResult {
    let s0 = init_state(p);
    let h0 = h.value(&to_empirical(&s0, p));
    let runs: Vec<(f64, f64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut s = s0.clone();
            let mut integral = 0.0;
            s.simulate_until_observed(p, t_scaled, &mut rng, |obs| {
                if let Observation::Hold { state, scaled_duration } = obs {
                    if scaled_duration > 0.0 {
                        let q = to_empirical(state, p);
                        integral += evaluate_generator(&q, h, p).total() * scaled_duration;
                    }
                }
            });
            (h.value(&to_empirical(&s, p)), integral)
        })
        .collect();
    let ht: Vec<f64> = runs.iter().map(|x| x.0).collect();
    let int: Vec<f64> = runs.iter().map(|x| x.1).collect();
    let disc: Vec<f64> = runs.iter().map(|x| x.0 - h0 - x.1).collect();
    DynkinResult {
        h0,
        mean_ht: MeanEstimate::from_samples(&ht),
        mean_integral: MeanEstimate::from_samples(&int),
        discrepancy: MeanEstimate::from_samples(&disc),
    }
}

/// `|(A^K - A-bar) H(q)| K / sum_i (m_i + m_i^2)` where `m_i` is the total
/// mass of `q_i`.
pub fn generator_gap_ratio(q: &[crate::coalescent::EmpiricalMeasure], h: &CylinderFunction, p: &ModelParams) -> f64 {
    let gap = evaluate_generator(q, h, p).total() - evaluate_limit_generator(q, h, p).total();
    let norm: f64 = q.iter().map(|m| {
        let x = m.total_mass();
        x + x * x
    }).sum();
    if norm == 0.0 {
        return 0.0;
    }
    gap.abs() * p.k / norm
}

/// Mean of [`generator_gap_ratio`] over states simulated to `t_scaled`.
pub fn mean_gap_ratio(p: &ModelParams, h: &CylinderFunction, t_scaled: f64, replicates: usize, seed: u64) -> MeanEstimate {
    let xs: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut s = init_state(p);
            s.simulate_until(p, t_scaled, &mut replicate_rng(seed, r));
            generator_gap_ratio(&to_empirical(&s, p), h, p)
        })
        .collect();
    MeanEstimate::from_samples(&xs)
}
