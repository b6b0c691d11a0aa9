//! Model parameters for the d-colony structured coalescent.
//!
//! [`ModelSpec`] is the raw, serializable description (the JSON parameter
//! schema). [`ModelSpec::derive`] checks that it is well formed and fills in
//! the scaling quantities; [`validate_params`] additionally enforces the
//! standing assumptions of the model (irreducible migration, positive
//! coalescence rates).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("migration matrix is not primitive")]
    NonPrimitiveMatrix,
    #[error("initial block counts sum to {sum}, expected N_K = {expected}")]
    InconsistentCounts { sum: u64, expected: u64 },
    #[error("non-positive rate: {0}")]
    NonPositiveRate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

/// Sampling regime, decided by the behaviour of `gamma_K = N_K / K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `gamma_K -> c`; configurations are not rescaled.
    Critical,
    /// `gamma_K -> infinity`; configurations are rescaled by `gamma_K`.
    Large,
}

/// JSON parameter schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "N_K")]
    pub n_k: u64,
    #[serde(rename = "L0")]
    pub l0: Vec<u64>,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Validated parameters with derived scaling quantities. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    /// Migration rates `w[i][j]` from colony `i` to colony `j`, diagonal zeroed.
    pub w: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub k: f64,
    pub n_k: u64,
    pub l0: Vec<u64>,
    pub regime: Regime,
    /// Limit of `gamma_K` in the critical regime; equals `gamma_K` when not supplied.
    /// Unused in the large regime.
    pub c: f64,
    /// Sampling fractions; defaults to `L0 / N_K`.
    pub beta: Vec<f64>,
    pub seed: Option<u64>,
    /// `N_K / K`.
    pub gamma: f64,
    /// Space scale: 1 (critical) or `gamma_K` (large).
    pub s_k: f64,
    /// `gamma_K / s_K`.
    pub b: f64,
}

impl ModelSpec {
    /// Structural checks and derived quantities, without the primitivity and
    /// strict-positivity requirements of [`validate_params`]. Degenerate but
    /// well-formed parameter sets (`W = 0`, `alpha_i = 0`) pass.
    pub fn derive(&self) -> Result<ModelParams, ModelError> {
        let d = self.d;
        if d == 0 {
            return Err(ModelError::Dimension("d must be positive".into()));
        }
        if self.w.len() != d || self.w.iter().any(|row| row.len() != d) {
            return Err(ModelError::Dimension(format!("W must be {d}x{d}")));
        }
        for len in [self.alpha.len(), self.l0.len()] {
            if len != d {
                return Err(ModelError::Dimension(format!(
                    "alpha and L0 must have length {d}"
                )));
            }
        }
        let mut w = self.w.clone();
        for (i, row) in w.iter_mut().enumerate() {
            row[i] = 0.0;
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(ModelError::NonPositiveRate(format!(
                    "negative or non-finite migration rate in row {i}"
                )));
            }
        }
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(ModelError::NonPositiveRate(
                "coalescence rates must be nonnegative".into(),
            ));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ModelError::NonPositiveRate("K must be positive".into()));
        }
        if self.n_k == 0 {
            return Err(ModelError::Invalid("N_K must be positive".into()));
        }
        let sum: u64 = self.l0.iter().sum();
        if sum != self.n_k {
            return Err(ModelError::InconsistentCounts {
                sum,
                expected: self.n_k,
            });
        }

        let gamma = self.n_k as f64 / self.k;
        let s_k = match self.regime {
            Regime::Critical => 1.0,
            Regime::Large => gamma,
        };
        let c = match (self.regime, self.c) {
            (Regime::Critical, Some(c)) if !(c.is_finite() && c > 0.0) => {
                return Err(ModelError::NonPositiveRate("c must be positive".into()))
            }
            (Regime::Critical, Some(c)) => c,
            _ => gamma,
        };
        let beta = match &self.beta {
            Some(beta) => {
                if beta.len() != d {
                    return Err(ModelError::Dimension(format!("beta must have length {d}")));
                }
                if beta.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(ModelError::Invalid("beta must be nonnegative".into()));
                }
                beta.clone()
            }
            None => self
                .l0
                .iter()
                .map(|&l| l as f64 / self.n_k as f64)
                .collect(),
        };

        Ok(ModelParams {
            d,
            w,
            alpha: self.alpha.clone(),
            k: self.k,
            n_k: self.n_k,
            l0: self.l0.clone(),
            regime: self.regime,
            c,
            beta,
            seed: self.seed,
            gamma,
            s_k,
            b: gamma / s_k,
        })
    }
}

/// Full validation: structural checks, primitive `W`, strictly positive
/// `alpha`, and `N_K >= K` in the large regime.
pub fn validate_params(spec: &ModelSpec) -> Result<ModelParams, ModelError> {
    let p = spec.derive()?;
    if p.regime == Regime::Large && p.gamma < 1.0 {
        return Err(ModelError::Invalid(format!(
            "large regime needs N_K >= K (gamma_K = {})",
            p.gamma
        )));
    }
    if p.alpha.iter().any(|&a| a <= 0.0) {
        return Err(ModelError::NonPositiveRate(
            "coalescence rates must be positive".into(),
        ));
    }
    if !is_primitive(&p.w) {
        return Err(ModelError::NonPrimitiveMatrix);
    }
    Ok(p)
}

/// `(A + I)^d > 0` entrywise, where `A` is the off-diagonal support of `w`.
pub fn is_primitive(w: &[Vec<f64>]) -> bool {
    let d = w.len();
    let base: Vec<Vec<bool>> = (0..d)
        .map(|i| (0..d).map(|j| i == j || w[i][j] > 0.0).collect())
        .collect();
    let mut reach = base.clone();
    for _ in 1..d {
        let mut next = vec![vec![false; d]; d];
        for i in 0..d {
            for k in 0..d {
                if reach[i][k] {
                    for j in 0..d {
                        next[i][j] |= base[k][j];
                    }
                }
            }
        }
        reach = next;
    }
    reach.iter().all(|row| row.iter().all(|&x| x))
}

impl ModelParams {
    /// Total emigration rate `w_i = sum_{j != i} w[i][j]` out of colony `i`.
    pub fn out_rate(&self, i: usize) -> f64 {
        self.w[i].iter().sum()
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha.iter().copied().fold(0.0, f64::max)
    }

    /// `min_i alpha_i / d^2`.
    pub fn alpha_min_d(&self) -> f64 {
        let min = self.alpha.iter().copied().fold(f64::INFINITY, f64::min);
        min / (self.d * self.d) as f64
    }
}

/// Unique stationary distribution of the migration chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub xi: Vec<f64>,
}

/// Solves `xi Q = 0`, `sum xi = 1` for the migration generator `Q`.
pub fn stationary_distribution(p: &ModelParams) -> Result<StationaryDistribution, ModelError> {
    if !is_primitive(&p.w) {
        return Err(ModelError::NonPrimitiveMatrix);
    }
    let d = p.d;
    // Rows of the transposed generator, with the last balance equation
    // replaced by the normalisation.
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] = if i == j { -p.out_rate(i) } else { p.w[j][i] };
        }
    }
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(d);
    rhs[d - 1] = 1.0;
    let xi = a
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::NonPrimitiveMatrix)?;
    Ok(StationaryDistribution {
        xi: xi.iter().copied().collect(),
    })
}

impl StationaryDistribution {
    /// Largest violation of `sum_{j != i} xi_j w_ji = xi_i sum_{j != i} w_ij`.
    pub fn balance_residual(&self, w: &[Vec<f64>]) -> f64 {
        let d = self.xi.len();
        (0..d)
            .map(|i| {
                let inflow: f64 = (0..d).filter(|&j| j != i).map(|j| self.xi[j] * w[j][i]).sum();
                let outflow: f64 = self.xi[i] * (0..d).filter(|&j| j != i).map(|j| w[i][j]).sum::<f64>();
                (inflow - outflow).abs()
            })
            .fold(0.0, f64::max)
    }
}
