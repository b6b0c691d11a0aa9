//! Monte Carlo for the two stochastic representations of the limit:
//! a multi-type branching process (critical regime) and a multi-type Feller
//! diffusion with its entrance law (large regime).

mod branching;
mod diffusion;

use thiserror::Error;

pub use branching::{
    branching_params, estimate_pmf, pgf_estimate, pmf_from_states, sample_branching, simulate_branching,
    write_branching_csv, BranchingParams, BranchingSample, PmfEstimate,
};
pub use diffusion::{
    diffusion_params, entrance_law_estimate, euler_maruyama, laplace_estimates, migration_flow,
    sample_diffusion, strang_splitting, write_diffusion_csv, DiffusionParams, EntranceLawEstimate,
    Scheme,
};

/// Population cap for a single branching replicate.
pub const EXPLOSION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReprError {
    #[error("beta_{0} is zero")]
    ZeroBeta(usize),
    #[error("death rate d_{colony} = {death} is negative; the branching representation does not apply")]
    RepresentationInvalid { colony: usize, death: f64 },
    #[error("population exceeded {EXPLOSION_CAP}")]
    ExplosionGuard,
    #[error("at least one sample is required")]
    InsufficientSamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
