use std::io;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ReprError;
use crate::model::ModelParams;
use crate::rng::replicate_rng;
use crate::stats::MeanEstimate;

/// Coefficients of `dZ_i = sqrt(sigma2_i Z_i) dB_i + (drift Z)_i dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    /// `alpha_i beta_i`.
    pub sigma2: Vec<f64>,
    /// Off-diagonal `w_ji beta_j / beta_i`, diagonal `-sum_{j != i} w_ij`.
    pub drift: Vec<Vec<f64>>,
}

impl DiffusionParams {
    pub fn d(&self) -> usize {
        self.sigma2.len()
    }
}

pub fn diffusion_params(p: &ModelParams) -> Result<DiffusionParams, ReprError> {
    if let Some(i) = p.beta.iter().position(|&b| !(b > 0.0)) {
        return Err(ReprError::ZeroBeta(i));
    }
    let d = p.d;
    let drift = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        -p.out_rate(i)
                    } else {
                        p.w[j][i] * p.beta[j] / p.beta[i]
                    }
                })
                .collect()
        })
        .collect();
    Ok(DiffusionParams {
        sigma2: (0..d).map(|i| p.alpha[i] * p.beta[i]).collect(),
        drift,
    })
}

/// Time discretization of the diffusion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Full-truncation Euler-Maruyama.
    Euler,
    /// Strang splitting: half a step of the linear migration flow, an exact
    /// branching step per colony, half a step of the flow.
    #[default]
    Splitting,
}

/// Poisson means above this use a Gaussian step instead of the exact law.
const POISSON_CAP: f64 = 1e10;

fn step_count(t: f64, dt: f64) -> usize {
    (t / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// `exp(drift * h)` as a dense row-major matrix.
pub fn migration_flow(dp: &DiffusionParams, h: f64) -> Vec<Vec<f64>> {
    let d = dp.d();
    let m = DMatrix::from_fn(d, d, |i, j| dp.drift[i][j] * h).exp();
    (0..d).map(|i| (0..d).map(|j| m[(i, j)].max(0.0)).collect()).collect()
}

/// Exact transition of `dZ = sqrt(sigma2 Z) dB` over `h`: a Poisson number of
/// exponential clusters with mean `sigma2 h / 2`.
fn branching_step<R: Rng + ?Sized>(z: f64, sigma2: f64, h: f64, rng: &mut R) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if sigma2 <= 0.0 {
        return z;
    }
    let scale = 0.5 * sigma2 * h;
    let mean = z / scale;
    if mean > POISSON_CAP {
        let noise: f64 = StandardNormal.sample(rng);
        return (z + (sigma2 * z * h).sqrt() * noise).max(0.0);
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    if n == 0.0 {
        return 0.0;
    }
    Gamma::new(n, scale).expect("positive shape").sample(rng)
}

fn apply(flow: &[Vec<f64>], z: &mut [f64], buf: &mut [f64]) {
    for (b, row) in buf.iter_mut().zip(flow) {
        *b = row.iter().zip(z.iter()).map(|(a, x)| a * x).sum();
    }
    z.copy_from_slice(buf);
}

fn split_path<R: Rng + ?Sized>(dp: &DiffusionParams, half_flow: &[Vec<f64>], x0: &[f64], n: usize, h: f64, rng: &mut R) -> Vec<f64> {
    let mut z = x0.to_vec();
    let mut buf = vec![0.0; z.len()];
    for _ in 0..n {
        if z.iter().all(|&x| x == 0.0) {
            break;
        }
        apply(half_flow, &mut z, &mut buf);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = branching_step(*zi, dp.sigma2[i], h, rng);
        }
        apply(half_flow, &mut z, &mut buf);
    }
    z
}

/// Strang splitting from `x0` to time `t` with steps no larger than `dt`.
/// Extinction within a step is sampled exactly.
pub fn strang_splitting<R: Rng + ?Sized>(dp: &DiffusionParams, x0: &[f64], t: f64, dt: f64, rng: &mut R) -> Vec<f64> {
    if t <= 0.0 {
        return x0.to_vec();
    }
    let n = step_count(t, dt);
    let h = t / n as f64;
    split_path(dp, &migration_flow(dp, 0.5 * h), x0, n, h, rng)
}

/// Full-truncation Euler-Maruyama from `x0` to time `t` with steps no larger
/// than `dt`; the state is clipped at zero after every step.
pub fn euler_maruyama<R: Rng + ?Sized>(dp: &DiffusionParams, x0: &[f64], t: f64, dt: f64, rng: &mut R) -> Vec<f64> {
    let d = dp.d();
    let mut z = x0.to_vec();
    if t <= 0.0 {
        return z;
    }
    let n = step_count(t, dt);
    let h = t / n as f64;
    let sqrt_h = h.sqrt();
    let mut next = vec![0.0; d];
    for _ in 0..n {
        if z.iter().all(|&x| x == 0.0) {
            break;
        }
        for i in 0..d {
            let drift: f64 = dp.drift[i].iter().zip(&z).map(|(a, x)| a * x).sum();
            let noise: f64 = StandardNormal.sample(rng);
            next[i] = z[i] + drift * h + (dp.sigma2[i] * z[i].max(0.0)).sqrt() * sqrt_h * noise;
        }
        for (zi, ni) in z.iter_mut().zip(&next) {
            *zi = ni.max(0.0);
        }
    }
    z
}

/// Terminal states of `samples` replicates; replicate `r` uses stream `r`.
pub fn sample_diffusion(
    dp: &DiffusionParams,
    x0: &[f64],
    t: f64,
    dt: f64,
    scheme: Scheme,
    samples: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    match scheme {
        Scheme::Euler => (0..samples as u64)
            .into_par_iter()
            .map(|r| euler_maruyama(dp, x0, t, dt, &mut replicate_rng(seed, r)))
            .collect(),
        Scheme::Splitting => {
            if t <= 0.0 {
                return vec![x0.to_vec(); samples];
            }
            let n = step_count(t, dt);
            let h = t / n as f64;
            let flow = migration_flow(dp, 0.5 * h);
            (0..samples as u64)
                .into_par_iter()
                .map(|r| split_path(dp, &flow, x0, n, h, &mut replicate_rng(seed, r)))
                .collect()
        }
    }
}

/// Mean of `exp(-<lambda, Z>)` over terminal states, per lambda.
pub fn laplace_estimates(states: &[Vec<f64>], lambdas: &[Vec<f64>]) -> Vec<MeanEstimate> {
    lambdas
        .iter()
        .map(|lam| {
            let xs: Vec<f64> = states.iter().map(|z| (-dot(lam, z)).exp()).collect();
            MeanEstimate::from_samples(&xs)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Terminal states from `x0 e_i`, each carrying weight `1 / x0`.
#[derive(Debug, Clone)]
pub struct EntranceLawEstimate {
    pub colony: usize,
    pub t: f64,
    pub x0: f64,
    pub states: Vec<Vec<f64>>,
}

impl EntranceLawEstimate {
    pub fn weight(&self) -> f64 {
        1.0 / self.x0
    }

    /// `<Q_i(t), 1 - exp(-<lambda, .>)>`; approximates `v_i(t, lambda)`.
    pub fn laplace(&self, lambda: &[f64]) -> MeanEstimate {
        let xs: Vec<f64> = self
            .states
            .iter()
            .map(|z| -(-dot(lambda, z)).exp_m1() / self.x0)
            .collect();
        MeanEstimate::from_samples(&xs)
    }

    /// Weighted mass of the surviving (nonzero) paths.
    pub fn surviving_mass(&self) -> MeanEstimate {
        let xs: Vec<f64> = self
            .states
            .iter()
            .map(|z| if z.iter().any(|&x| x > 0.0) { self.weight() } else { 0.0 })
            .collect();
        MeanEstimate::from_samples(&xs)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn entrance_law_estimate(
    dp: &DiffusionParams,
    i: usize,
    t: f64,
    x0: f64,
    samples: usize,
    dt: f64,
    scheme: Scheme,
    seed: u64,
) -> Result<EntranceLawEstimate, ReprError> {
    if !(t > 0.0) || !(x0 > 0.0) || i >= dp.d() {
        return Err(ReprError::InvalidArgument(format!(
            "entrance law needs t > 0, x0 > 0 and a valid colony (t = {t}, x0 = {x0}, i = {i})"
        )));
    }
    if samples == 0 {
        return Err(ReprError::InsufficientSamples);
    }
    let mut start = vec![0.0; dp.d()];
    start[i] = x0;
    Ok(EntranceLawEstimate {
        colony: i,
        t,
        x0,
        states: sample_diffusion(dp, &start, t, dt, scheme, samples, seed),
    })
}

/// CSV `replicate,z1,...,zd`.
pub fn write_diffusion_csv<W: io::Write>(states: &[Vec<f64>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = states.first().map_or(0, Vec::len);
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=d).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for (r, z) in states.iter().enumerate() {
        let mut row = vec![r.to_string()];
        row.extend(z.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
