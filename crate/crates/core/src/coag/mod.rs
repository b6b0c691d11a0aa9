//! Deterministic solvers for the limiting systems.
//!
//! * the discrete coagulation system on a truncated lattice, with the loss
//!   term driven by the exact total-mass ODE,
//! * the total-mass Riccati system,
//! * the generating-function ODE of the branching representation,
//! * the Laplace exponent `dv/dt = -psi(v)` of the Feller diffusion.
//!
//! All integrators are fixed-step RK4.

mod lattice;
pub mod ode;

use std::io;

use thiserror::Error;

pub use lattice::Lattice;
pub use ode::{integrate, output_grid, rk4_step, Trajectory};

use crate::model::ModelParams;
use crate::repr::{branching_params, BranchingParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoagError {
    #[error("solution dropped below -1e-9 even after halving dt = {dt} six times")]
    StepTooLarge { dt: f64 },
    #[error("beta_{0} is zero")]
    ZeroBeta(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn encode(v: &[impl ToString]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("|")
}

/// Right-hand side of the total-mass system at `rho`.
pub fn rhs_total_mass(rho: &[f64], p: &ModelParams) -> Vec<f64> {
    let mut out = vec![0.0; p.d];
    mass_rhs_into(rho, p, &mut out);
    out
}

fn mass_rhs_into(rho: &[f64], p: &ModelParams, out: &mut [f64]) {
    for i in 0..p.d {
        let mut r = -0.5 * p.alpha[i] * rho[i] * rho[i];
        for j in 0..p.d {
            if j != i {
                r += p.w[j][i] * rho[j] - p.w[i][j] * rho[i];
            }
        }
        out[i] = r;
    }
}

/// Time derivative of the discrete system at `u` (one lattice vector per
/// colony). `rho` is the exact total mass, used in the loss term.
pub fn rhs_discrete(lattice: &Lattice, u: &[Vec<f64>], rho: &[f64], p: &ModelParams) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; lattice.len()]; p.d];
    for (i, o) in out.iter_mut().enumerate() {
        discrete_rhs_colony(lattice, i, |j| &u[j], rho, p, o);
    }
    out
}

fn discrete_rhs_colony<'a, U>(lattice: &Lattice, i: usize, u: U, rho: &[f64], p: &ModelParams, out: &mut [f64])
where
    U: Fn(usize) -> &'a [f64],
{
    let ui = u(i);
    let a = p.alpha[i];
    let out_rate = p.out_rate(i);
    for (idx, o) in out.iter_mut().enumerate() {
        let mut r = a * (0.5 * lattice.convolve_at(ui, idx) - rho[i] * ui[idx]) - out_rate * ui[idx];
        for j in 0..p.d {
            if j != i && p.w[j][i] != 0.0 {
                r += p.w[j][i] * u(j)[idx];
            }
        }
        *o = r;
    }
}

/// `u_i(t, n)` on a truncated lattice at the recorded times.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub lattice: Lattice,
    pub times: Vec<f64>,
    /// `u[time][colony][lattice index]`.
    pub u: Vec<Vec<Vec<f64>>>,
    /// Exact total mass `rho[time][colony]`.
    pub rho: Vec<Vec<f64>>,
    /// Step actually used (after any halvings).
    pub dt: f64,
    pub c: f64,
    pub beta: Vec<f64>,
}

impl DiscreteSolution {
    /// `u_i(times[t_idx], n)`; zero outside the lattice.
    pub fn value(&self, t_idx: usize, i: usize, n: &[u32]) -> f64 {
        self.lattice.index(n).map_or(0.0, |idx| self.u[t_idx][i][idx])
    }

    /// Index of the recorded time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        nearest(&self.times, t)
    }

    /// `sum_{|n| <= n_max} u_i(t, n)`.
    pub fn truncated_mass(&self, t_idx: usize, i: usize) -> f64 {
        self.u[t_idx][i].iter().sum()
    }

    /// `sum_n n_k u_i(t, n)` over the lattice.
    pub fn leaf_mass(&self, t_idx: usize, i: usize, k: usize) -> f64 {
        self.lattice
            .points()
            .iter()
            .zip(&self.u[t_idx][i])
            .map(|(n, u)| f64::from(n[k]) * u)
            .sum()
    }

    /// CSV `t,colony,n,u` where `n` is `n1|...|nd`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "colony", "n", "u"])?;
        for (t, ut) in self.times.iter().zip(&self.u) {
            for (i, ui) in ut.iter().enumerate() {
                for (n, v) in self.lattice.points().iter().zip(ui) {
                    w.write_record([t.to_string(), i.to_string(), encode(n), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map_or(0, |(i, _)| i)
}

/// Solves the discrete coagulation system up to `horizon`, recording on
/// [`output_grid`].
pub fn solve_discrete(p: &ModelParams, horizon: f64, n_max: u32, dt: f64) -> Result<DiscreteSolution, CoagError> {
    solve_discrete_at(p, &output_grid(horizon, dt), n_max, dt)
}

/// Same as [`solve_discrete`] with explicit output times.
///
/// Initial condition `u_i(0, .) = c beta_i` at `e_i`. Since the gain term at
/// `n` only involves points of smaller norm, values at `|n| <= n_max` do not
/// depend on the truncation.
pub fn solve_discrete_at(p: &ModelParams, times: &[f64], n_max: u32, dt: f64) -> Result<DiscreteSolution, CoagError> {
    if n_max == 0 {
        return Err(CoagError::InvalidArgument("n_max must be at least 1".into()));
    }
    let lattice = Lattice::new(p.d, n_max);
    let len = lattice.len();
    let d = p.d;
    let mut y0 = vec![0.0; d * len + d];
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        let idx = lattice.index(&e).expect("unit vectors are in the lattice");
        y0[i * len + idx] = p.c * p.beta[i];
        y0[d * len + i] = p.c * p.beta[i];
    }
    let rhs = |y: &[f64], dy: &mut [f64]| {
        let (u, rho) = y.split_at(d * len);
        let (du, drho) = dy.split_at_mut(d * len);
        for (i, out) in du.chunks_mut(len).enumerate() {
            discrete_rhs_colony(&lattice, i, |j| &u[j * len..(j + 1) * len], rho, p, out);
        }
        mass_rhs_into(rho, p, drho);
    };
    let tr = integrate(&y0, times, dt, rhs, |_| true)?;
    let (u, rho) = tr
        .states
        .iter()
        .map(|y| {
            let (u, rho) = y.split_at(d * len);
            (u.chunks(len).map(<[f64]>::to_vec).collect(), rho.to_vec())
        })
        .unzip();
    Ok(DiscreteSolution {
        lattice,
        times: tr.times,
        u,
        rho,
        dt: tr.dt,
        c: p.c,
        beta: p.beta.clone(),
    })
}

/// Total mass path `rho[time][colony]`.
#[derive(Debug, Clone)]
pub struct MassPath {
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub dt: f64,
}

impl MassPath {
    pub fn time_index(&self, t: f64) -> usize {
        nearest(&self.times, t)
    }

    /// CSV `t,colony,rho`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "colony", "rho"])?;
        for (t, r) in self.times.iter().zip(&self.rho) {
            for (i, v) in r.iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn solve_total_mass(p: &ModelParams, horizon: f64, dt: f64) -> Result<MassPath, CoagError> {
    solve_total_mass_at(p, &output_grid(horizon, dt), dt)
}

/// RK4 on `rho_i' = -(alpha_i/2) rho_i^2 + sum_j (w_ji rho_j - w_ij rho_i)`,
/// `rho(0) = c beta`.
pub fn solve_total_mass_at(p: &ModelParams, times: &[f64], dt: f64) -> Result<MassPath, CoagError> {
    let y0: Vec<f64> = p.beta.iter().map(|b| p.c * b).collect();
    let tr = integrate(&y0, times, dt, |y, dy| mass_rhs_into(y, p, dy), |_| true)?;
    Ok(MassPath {
        times: tr.times,
        rho: tr.states,
        dt: tr.dt,
    })
}

/// Path of a vector ODE indexed by a fixed argument `lambda`.
#[derive(Debug, Clone)]
pub struct ExponentPath {
    pub lambda: Vec<f64>,
    pub times: Vec<f64>,
    /// `v[time][colony]`.
    pub v: Vec<Vec<f64>>,
    pub dt: f64,
}

impl ExponentPath {
    pub fn time_index(&self, t: f64) -> usize {
        nearest(&self.times, t)
    }

    /// Value at the last recorded time.
    pub fn last(&self) -> &[f64] {
        self.v.last().expect("at least one output time")
    }

    /// CSV `t,colony,lambda,v` where `lambda` is `lambda1|...|lambdad`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_exponents(std::slice::from_ref(self), out)
    }
}

/// Writes several paths (e.g. a lambda grid) into one CSV.
pub fn write_exponents<W: io::Write>(paths: &[ExponentPath], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "colony", "lambda", "v"])?;
    for path in paths {
        let lam = encode(&path.lambda);
        for (t, v) in path.times.iter().zip(&path.v) {
            for (i, x) in v.iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), lam.clone(), x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Probability generating functions `v_i(t, lambda) = E_{e_i}[lambda^Z(t)]`.
#[derive(Debug, Clone)]
pub struct GeneratingFunctionSolution {
    pub path: ExponentPath,
    pub rates: BranchingParams,
    /// Set when some death rate `d_i` is negative, i.e. the branching
    /// representation does not apply (the ODE is still solved).
    pub warning: bool,
}

pub fn solve_generating_function(
    p: &ModelParams,
    lambda: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<GeneratingFunctionSolution, CoagError> {
    solve_generating_function_at(p, lambda, &output_grid(horizon, dt), dt)
}

/// RK4 on `v_i' = b_i v_i^2 + d_i - (b_i + d_i) v_i + sum_j m_ij (v_j - v_i)`,
/// `v(0) = lambda`, with the rates of [`branching_params`].
pub fn solve_generating_function_at(
    p: &ModelParams,
    lambda: &[f64],
    times: &[f64],
    dt: f64,
) -> Result<GeneratingFunctionSolution, CoagError> {
    if lambda.len() != p.d || lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(CoagError::InvalidArgument(format!(
            "lambda must lie in [0,1]^{}",
            p.d
        )));
    }
    let rates = branching_params(p).map_err(|e| match e {
        crate::repr::ReprError::ZeroBeta(i) => CoagError::ZeroBeta(i),
        other => CoagError::InvalidArgument(other.to_string()),
    })?;
    let warning = !rates.valid;
    if warning {
        log::warn!("negative death rate {:?}: branching representation does not apply", rates.death);
    }
    let rhs = |v: &[f64], dv: &mut [f64]| {
        for i in 0..v.len() {
            let (b, dd) = (rates.branch[i], rates.death[i]);
            let mut r = b * v[i] * v[i] + dd - (b + dd) * v[i];
            for (j, m) in rates.migrate[i].iter().enumerate() {
                if j != i {
                    r += m * (v[j] - v[i]);
                }
            }
            dv[i] = r;
        }
    };
    // Outside the representation regime v need not stay a probability.
    let tr = integrate(lambda, times, dt, rhs, |_| !warning)?;
    Ok(GeneratingFunctionSolution {
        path: ExponentPath {
            lambda: lambda.to_vec(),
            times: tr.times,
            v: tr.states,
            dt: tr.dt,
        },
        rates,
        warning,
    })
}

/// `psi_i(lambda) = alpha_i beta_i lambda_i^2 / 2 - sum_j (w_ji (beta_j/beta_i) lambda_j - w_ij lambda_i)`.
pub fn psi(lambda: &[f64], p: &ModelParams) -> Result<Vec<f64>, CoagError> {
    if let Some(i) = p.beta.iter().position(|&b| !(b > 0.0)) {
        return Err(CoagError::ZeroBeta(i));
    }
    let mut out = vec![0.0; p.d];
    psi_into(lambda, p, &mut out);
    Ok(out)
}

fn psi_into(lambda: &[f64], p: &ModelParams, out: &mut [f64]) {
    for i in 0..p.d {
        let mut r = 0.5 * p.alpha[i] * p.beta[i] * lambda[i] * lambda[i];
        for j in 0..p.d {
            if j != i {
                r -= p.w[j][i] * (p.beta[j] / p.beta[i]) * lambda[j] - p.w[i][j] * lambda[i];
            }
        }
        out[i] = r;
    }
}

pub fn solve_laplace_exponent(p: &ModelParams, lambda: &[f64], horizon: f64, dt: f64) -> Result<ExponentPath, CoagError> {
    solve_laplace_exponent_at(p, lambda, &output_grid(horizon, dt), dt)
}

/// RK4 on `v' = -psi(v)`, `v(0) = lambda`.
pub fn solve_laplace_exponent_at(p: &ModelParams, lambda: &[f64], times: &[f64], dt: f64) -> Result<ExponentPath, CoagError> {
    if lambda.len() != p.d || lambda.iter().any(|&l| !(l >= 0.0)) {
        return Err(CoagError::InvalidArgument("lambda must be nonnegative".into()));
    }
    psi(lambda, p)?;
    let rhs = |v: &[f64], dv: &mut [f64]| {
        psi_into(v, p, dv);
        dv.iter_mut().for_each(|x| *x = -*x);
    };
    let tr = integrate(lambda, times, dt, rhs, |_| true)?;
    Ok(ExponentPath {
        lambda: lambda.to_vec(),
        times: tr.times,
        v: tr.states,
        dt: tr.dt,
    })
}
