use std::io;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::{ReprError, EXPLOSION_CAP};
use crate::coalescent::pick_weighted;
use crate::model::ModelParams;
use crate::rng::replicate_rng;
use crate::stats::MeanEstimate;

/// Death rates this negative are treated as roundoff.
const DEATH_TOL: f64 = 1e-12;

/// Per-type rates of the branching particle system.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingParams {
    /// `b_i = c alpha_i beta_i / 2`.
    pub branch: Vec<f64>,
    /// `d_i = b_i - sum_{j != i} ((beta_j / beta_i) w_ji - w_ij)`.
    pub death: Vec<f64>,
    /// `migrate[i][j] = (beta_j / beta_i) w_ji`, zero diagonal.
    pub migrate: Vec<Vec<f64>>,
    /// All `d_i >= 0`.
    pub valid: bool,
    pub c: f64,
    pub beta: Vec<f64>,
}

impl BranchingParams {
    pub fn d(&self) -> usize {
        self.branch.len()
    }

    fn check(&self) -> Result<(), ReprError> {
        match self.death.iter().position(|&x| x < -DEATH_TOL) {
            Some(colony) => Err(ReprError::RepresentationInvalid {
                colony,
                death: self.death[colony],
            }),
            None => Ok(()),
        }
    }
}

pub fn branching_params(p: &ModelParams) -> Result<BranchingParams, ReprError> {
    if let Some(i) = p.beta.iter().position(|&b| !(b > 0.0)) {
        return Err(ReprError::ZeroBeta(i));
    }
    let d = p.d;
    let branch: Vec<f64> = (0..d).map(|i| p.c * p.alpha[i] * p.beta[i] / 2.0).collect();
    let migrate: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { 0.0 } else { p.beta[j] / p.beta[i] * p.w[j][i] })
                .collect()
        })
        .collect();
    let death: Vec<f64> = (0..d)
        .map(|i| {
            let net: f64 = (0..d).filter(|&j| j != i).map(|j| migrate[i][j] - p.w[i][j]).sum();
            branch[i] - net
        })
        .collect();
    let valid = death.iter().all(|&x| x >= -DEATH_TOL);
    Ok(BranchingParams {
        branch,
        death,
        migrate,
        valid,
        c: p.c,
        beta: p.beta.clone(),
    })
}

/// Exact simulation of the particle counts at time `t` from one particle of
/// type `start`.
pub fn simulate_branching<R: Rng + ?Sized>(
    bp: &BranchingParams,
    start: usize,
    t: f64,
    rng: &mut R,
) -> Result<Vec<u64>, ReprError> {
    bp.check()?;
    let d = bp.d();
    if start >= d {
        return Err(ReprError::InvalidArgument(format!("start colony {start} out of range")));
    }
    let death: Vec<f64> = bp.death.iter().map(|x| x.max(0.0)).collect();
    let per_particle: Vec<f64> = (0..d)
        .map(|i| bp.branch[i] + death[i] + bp.migrate[i].iter().sum::<f64>())
        .collect();
    let mut z = vec![0u64; d];
    z[start] = 1;
    let mut time = 0.0;
    let mut weights = vec![0.0; d];
    let mut event = vec![0.0; d + 2];
    loop {
        for i in 0..d {
            weights[i] = z[i] as f64 * per_particle[i];
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Ok(z);
        }
        let e: f64 = Exp1.sample(rng);
        time += e / total;
        if time > t {
            return Ok(z);
        }
        let i = pick_weighted(&weights, rng);
        event[0] = bp.branch[i];
        event[1] = death[i];
        event[2..].copy_from_slice(&bp.migrate[i]);
        match pick_weighted(&event, rng) {
            0 => {
                z[i] += 1;
                if z.iter().sum::<u64>() > EXPLOSION_CAP {
                    return Err(ReprError::ExplosionGuard);
                }
            }
            1 => z[i] -= 1,
            k => {
                z[i] -= 1;
                z[k - 2] += 1;
            }
        }
    }
}

/// Terminal states of independent replicates; replicate `r` uses stream `r`
/// of `seed`. Exploded replicates are counted and dropped.
#[derive(Debug, Clone)]
pub struct BranchingSample {
    pub start: usize,
    pub t: f64,
    pub states: Vec<Vec<u64>>,
    pub explosions: usize,
}

impl BranchingSample {
    /// Replicates attempted, including exploded ones.
    pub fn attempted(&self) -> usize {
        self.states.len() + self.explosions
    }
}

pub fn sample_branching(
    bp: &BranchingParams,
    start: usize,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<BranchingSample, ReprError> {
    if samples == 0 {
        return Err(ReprError::InsufficientSamples);
    }
    bp.check()?;
    let results: Vec<Result<Vec<u64>, ReprError>> = (0..samples as u64)
        .into_par_iter()
        .map(|r| simulate_branching(bp, start, t, &mut replicate_rng(seed, r)))
        .collect();
    let mut states = Vec::with_capacity(samples);
    let mut explosions = 0;
    for r in results {
        match r {
            Ok(z) => states.push(z),
            Err(ReprError::ExplosionGuard) => explosions += 1,
            Err(e) => return Err(e),
        }
    }
    if explosions > 0 {
        log::warn!("{explosions} of {samples} branching replicates hit the population cap");
    }
    Ok(BranchingSample {
        start,
        t,
        states,
        explosions,
    })
}

/// Frequency estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl PmfEstimate {
    fn from_hits(hits: usize, n: usize) -> Self {
        let value = hits as f64 / n as f64;
        PmfEstimate {
            value,
            std_error: (value * (1.0 - value) / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// `P(Z(t) = n)` from a sample; exploded replicates count as misses.
pub fn pmf_from_states(sample: &BranchingSample, n: &[u64]) -> Result<PmfEstimate, ReprError> {
    let total = sample.attempted();
    if total == 0 {
        return Err(ReprError::InsufficientSamples);
    }
    let hits = sample.states.iter().filter(|z| z.as_slice() == n).count();
    Ok(PmfEstimate::from_hits(hits, total))
}

/// Estimates `P_{e_i}(Z(t) = n)` from `samples` replicates.
pub fn estimate_pmf(
    bp: &BranchingParams,
    i: usize,
    t: f64,
    n: &[u64],
    samples: usize,
    seed: u64,
) -> Result<PmfEstimate, ReprError> {
    pmf_from_states(&sample_branching(bp, i, t, samples, seed)?, n)
}

/// Monte Carlo estimate of `E[prod_k lambda_k^{Z_k(t)}]`.
pub fn pgf_estimate(sample: &BranchingSample, lambda: &[f64]) -> MeanEstimate {
    let xs: Vec<f64> = sample
        .states
        .iter()
        .map(|z| z.iter().zip(lambda).map(|(&n, l)| l.powi(n as i32)).product())
        .collect();
    MeanEstimate::from_samples(&xs)
}

/// CSV `replicate,colony,n` where `colony` is the starting type and `n` is
/// `n1|...|nd`.
pub fn write_branching_csv<W: io::Write>(sample: &BranchingSample, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "colony", "n"])?;
    for (r, z) in sample.states.iter().enumerate() {
        let n: Vec<String> = z.iter().map(u64::to_string).collect();
        w.write_record([r.to_string(), sample.start.to_string(), n.join("|")])?;
    }
    w.flush()?;
    Ok(())
}
