use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coag::CoagError;
use crate::kingman::BoundsError;
use crate::model::{ModelError, ModelSpec, Regime};
use crate::repr::{ReprError, Scheme};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coag(#[from] CoagError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ConvergenceCritical,
    ConvergenceLarge,
    InitialCondition,
    Coupling,
    MomentBounds,
    Representation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ConvergenceCritical => "convergence_critical",
            ExperimentKind::ConvergenceLarge => "convergence_large",
            ExperimentKind::InitialCondition => "initial_condition",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::MomentBounds => "moment_bounds",
            ExperimentKind::Representation => "representation",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        self as u64 + 1
    }
}

fn default_replicates() -> usize {
    100
}
fn default_times() -> Vec<f64> {
    vec![1.0]
}
fn default_dt() -> f64 {
    1e-3
}
fn default_max_norm() -> u32 {
    3
}
fn default_samples() -> usize {
    100_000
}
fn default_x0() -> f64 {
    1e-2
}
fn default_moments() -> Vec<f64> {
    vec![1.0, 2.0]
}

/// Model parameters (flattened at the top level of the JSON) plus the
/// experiment keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub model: ModelSpec,
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    /// Scales to run; `N_K` and `L0` are rebuilt per `K` (see [`spec_for_k`]).
    /// Empty means `[K]`.
    #[serde(default)]
    pub k_list: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Observation times (rescaled for the coalescent; unscaled horizon for
    /// the coupling).
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Empty means the single vector of ones.
    #[serde(default)]
    pub lambda_grid: Vec<Vec<f64>>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// RK4 and diffusion step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Largest `|n|_1` for point-mass observables.
    #[serde(default = "default_max_norm")]
    pub max_norm: u32,
    /// Monte Carlo sample size for the representation engines.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Diffusion discretization.
    #[serde(default)]
    pub scheme: Scheme,
    /// Starting mass for the entrance-law estimate.
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Diffusion start for the Laplace check; defaults to all ones.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    /// Moment orders `p` for the Kingman bound.
    #[serde(default = "default_moments")]
    pub moments: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> u64 {
        self.model.seed.unwrap_or(0)
    }

    pub fn k_values(&self) -> Vec<f64> {
        if self.k_list.is_empty() {
            vec![self.model.k]
        } else {
            self.k_list.clone()
        }
    }

    pub fn lambdas(&self) -> Vec<Vec<f64>> {
        if self.lambda_grid.is_empty() {
            vec![vec![1.0; self.model.d]]
        } else {
            self.lambda_grid.clone()
        }
    }

    /// Observation times sorted ascending, duplicates removed.
    pub fn sorted_times(&self) -> Vec<f64> {
        let mut t = self.times.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        self.model.derive()?;
        if self.k_values().iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return bad("k_list entries must be positive");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("times must be nonempty and nonnegative");
        }
        if self.model.regime == Regime::Large
            && matches!(
                self.experiment,
                Some(ExperimentKind::ConvergenceLarge | ExperimentKind::InitialCondition)
            )
            && self.times.iter().any(|&t| t <= 0.0)
        {
            return bad("observation times must be positive in the large regime");
        }
        if self
            .lambdas()
            .iter()
            .any(|l| l.len() != self.model.d || l.iter().any(|x| !(x.is_finite() && *x >= 0.0)))
        {
            return bad("lambda_grid entries must be nonnegative d-vectors");
        }
        if !(self.dt > 0.0) || !(self.x0 > 0.0) {
            return bad("dt and x0 must be positive");
        }
        if self.max_norm == 0 {
            return bad("max_norm must be at least 1");
        }
        if let Some(s) = &self.start {
            if s.len() != self.model.d || s.iter().any(|x| !(*x >= 0.0)) {
                return bad("start must be a nonnegative d-vector");
            }
        }
        if self.moments.iter().any(|p| !(*p >= 1.0)) {
            return bad("moments must be >= 1");
        }
        Ok(())
    }
}

/// Splits `n` into integer parts proportional to `weights` (largest
/// remainder, ties to the lower index).
pub fn apportion(n: u64, weights: &[f64]) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut rest = n - parts.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        parts[i] += 1;
        rest -= 1;
    }
    parts
}

/// The template model rescaled to `k`.
///
/// Critical: `N_K = round(c K)` with `c` from the template (or its `gamma`).
/// Large: `N_K = round(K^{3/2})`. In both, `beta` is fixed to the template's
/// limit vector and `L0` apportions `N_K` by `beta`.
pub fn spec_for_k(template: &ModelSpec, k: f64) -> Result<ModelSpec, HarnessError> {
    let base = template.derive()?;
    let n_k = match template.regime {
        Regime::Critical => (base.c * k).round() as u64,
        Regime::Large => k.powf(1.5).round() as u64,
    };
    if n_k == 0 {
        return Err(HarnessError::Config(format!("N_K rounds to zero at K = {k}")));
    }
    let mut spec = template.clone();
    spec.k = k;
    spec.n_k = n_k;
    spec.l0 = apportion(n_k, &base.beta);
    spec.beta = Some(base.beta.clone());
    if template.regime == Regime::Critical {
        spec.c = Some(base.c);
    }
    Ok(spec)
}
