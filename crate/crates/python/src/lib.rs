use std::fmt::Display;

use coalcoag::coag::{psi, solve_discrete, solve_laplace_exponent, solve_total_mass};
use coalcoag::coalescent::{init_state, to_empirical};
use coalcoag::harness::{run_experiment as run_harness, ExperimentConfig};
use coalcoag::kingman::{coupled_simulate, kingman_moment_bound, kingman_simulate};
use coalcoag::model::{validate_params, ModelParams, ModelSpec, Regime};
use coalcoag::repr::{branching_params, diffusion_params, estimate_pmf, sample_diffusion, Scheme};
use coalcoag::rng::replicate_rng;
use coalcoag::stats::MeanEstimate;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err<E: Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Validated model parameters.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    /// Builds a model from a JSON object with keys `d`, `W`, `alpha`, `K`,
    /// `N_K`, `L0`, `regime` and optionally `c`, `beta`, `seed`.
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(json).map_err(value_err)?;
        let params = validate_params(&spec).map_err(value_err)?;
        Ok(PyModel { params })
    }

    #[getter]
    fn d(&self) -> usize {
        self.params.d
    }

    #[getter]
    fn k(&self) -> f64 {
        self.params.k
    }

    #[getter]
    fn n_k(&self) -> u64 {
        self.params.n_k
    }

    #[getter]
    fn regime(&self) -> &'static str {
        match self.params.regime {
            Regime::Critical => "critical",
            Regime::Large => "large",
        }
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.params.gamma
    }

    #[getter]
    fn s_k(&self) -> f64 {
        self.params.s_k
    }

    #[getter]
    fn b(&self) -> f64 {
        self.params.b
    }

    #[getter]
    fn c(&self) -> f64 {
        self.params.c
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.params.beta.clone()
    }

    /// Block configurations per colony at rescaled time `t`, as
    /// `[[(config, count), ...], ...]`.
    #[pyo3(signature = (t, seed=0))]
    fn simulate(&self, py: Python<'_>, t: f64, seed: u64) -> Vec<Vec<(Vec<u32>, u64)>> {
        py.detach(|| {
            let mut s = init_state(&self.params);
            s.simulate_until(&self.params, t, &mut replicate_rng(seed, 0));
            s.colonies
                .iter()
                .map(|c| c.counts().into_iter().map(|(k, n)| (k.0, n)).collect())
                .collect()
        })
    }

    /// `<mu_i, 1 - exp(-<lambda, x>)>` for each colony of one simulated path.
    #[pyo3(signature = (t, lam, seed=0))]
    fn laplace_functional(&self, py: Python<'_>, t: f64, lam: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let mut s = init_state(&self.params);
            s.simulate_until(&self.params, t, &mut replicate_rng(seed, 0));
            to_empirical(&s, &self.params)
                .iter()
                .map(|m| m.laplace_functional(&lam))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(value_err)
    }

    /// Coupled paths as `(t, lhat, l_total, ltilde)` up to unscaled time `horizon`.
    #[pyo3(signature = (horizon, seed=0))]
    fn couple(&self, py: Python<'_>, horizon: f64, seed: u64) -> Vec<(f64, u64, u64, u64)> {
        py.detach(|| {
            coupled_simulate(&self.params, horizon, &mut replicate_rng(seed, 0))
                .records
                .iter()
                .map(|r| (r.time, r.lhat, r.l_total(), r.ltilde))
                .collect()
        })
    }

    /// Discrete coagulation solution. Returns a dict with `times`, `points`
    /// and `u[time][colony][point]`.
    #[pyo3(signature = (horizon, n_max, dt=1e-3))]
    fn solve_discrete<'py>(&self, py: Python<'py>, horizon: f64, n_max: u32, dt: f64) -> PyResult<Bound<'py, PyDict>> {
        let sol = py.detach(|| solve_discrete(&self.params, horizon, n_max, dt)).map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("times", sol.times)?;
        out.set_item("points", sol.lattice.points().to_vec())?;
        out.set_item("u", sol.u)?;
        out.set_item("rho", sol.rho)?;
        Ok(out)
    }

    /// Total masses `(times, rho[time][colony])`.
    #[pyo3(signature = (horizon, dt=1e-3))]
    fn total_mass(&self, horizon: f64, dt: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = solve_total_mass(&self.params, horizon, dt).map_err(value_err)?;
        Ok((m.times, m.rho))
    }

    /// Laplace exponent `(times, v[time][colony])` started from `lam`.
    #[pyo3(signature = (lam, horizon, dt=1e-3))]
    fn laplace_exponent(&self, lam: Vec<f64>, horizon: f64, dt: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let e = solve_laplace_exponent(&self.params, &lam, horizon, dt).map_err(value_err)?;
        Ok((e.times, e.v))
    }

    fn psi(&self, lam: Vec<f64>) -> PyResult<Vec<f64>> {
        psi(&lam, &self.params).map_err(value_err)
    }

    /// Estimated `P(Z(t) = n)` for the branching process started from one
    /// particle in `colony`, as `(value, std_error)`.
    #[pyo3(signature = (colony, t, n, samples=10_000, seed=0))]
    fn branching_pmf(&self, py: Python<'_>, colony: usize, t: f64, n: Vec<u64>, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let bp = branching_params(&self.params).map_err(value_err)?;
        let est = py.detach(|| estimate_pmf(&bp, colony, t, &n, samples, seed)).map_err(value_err)?;
        Ok((est.value, est.std_error))
    }

    /// Estimated `E exp(-<lam, X(t)>)` for the diffusion started at `x0`, as
    /// `(mean, std_error)`. `scheme` is `"splitting"` or `"euler"`.
    #[pyo3(signature = (x0, t, lam, samples=10_000, dt=1e-3, seed=0, scheme="splitting"))]
    #[allow(clippy::too_many_arguments)]
    fn diffusion_laplace(
        &self,
        py: Python<'_>,
        x0: Vec<f64>,
        t: f64,
        lam: Vec<f64>,
        samples: usize,
        dt: f64,
        seed: u64,
        scheme: &str,
    ) -> PyResult<(f64, f64)> {
        let scheme = match scheme {
            "splitting" => Scheme::Splitting,
            "euler" => Scheme::Euler,
            other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
        };
        let dp = diffusion_params(&self.params).map_err(value_err)?;
        if x0.len() != self.params.d || lam.len() != self.params.d {
            return Err(PyValueError::new_err("x0 and lam must have length d"));
        }
        let xs: Vec<f64> = py.detach(|| {
            sample_diffusion(&dp, &x0, t, dt, scheme, samples, seed)
                .iter()
                .map(|z| (-z.iter().zip(&lam).map(|(a, b)| a * b).sum::<f64>()).exp())
                .collect()
        });
        let m = MeanEstimate::from_samples(&xs);
        Ok((m.mean, m.std_error))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(d={}, K={}, N_K={}, regime={})",
            self.params.d,
            self.params.k,
            self.params.n_k,
            self.regime()
        )
    }
}

#[pyfunction]
fn moment_bound(n: u64, rho: f64, t: f64, p: f64) -> f64 {
    kingman_moment_bound(n, rho, t, p)
}

/// Kingman block-counting path `(jump_times, counts)`.
#[pyfunction]
#[pyo3(signature = (n, rho, horizon, seed=0))]
fn kingman_path(n: u64, rho: f64, horizon: f64, seed: u64) -> (Vec<f64>, Vec<u64>) {
    let k = kingman_simulate(n, rho, horizon, &mut replicate_rng(seed, 0));
    (k.times, k.counts)
}

/// Runs the experiment described by a JSON config and returns its report
/// rows as dicts.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_json(json).map_err(value_err)?;
    let rows = py.detach(|| run_harness(&cfg)).map_err(value_err)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("experiment", r.experiment)?;
            d.set_item("K", r.k)?;
            d.set_item("t", r.t)?;
            d.set_item("colony", r.colony)?;
            d.set_item("observable", r.observable)?;
            d.set_item("simulated", r.simulated)?;
            d.set_item("reference", r.reference)?;
            d.set_item("std_error", r.std_error)?;
            d.set_item("tolerance", r.tolerance)?;
            d.set_item("pass", r.pass)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn coalcoag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(moment_bound, m)?)?;
    m.add_function(wrap_pyfunction!(kingman_path, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
